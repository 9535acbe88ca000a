// Binary containers for spectrograms, CTF filters, and NMF factors.
// All integers and floats are little-endian.
//
// Spectrogram ("CTFSPG1\0"): u32 bins, frames, channels, window_len, hop,
//   sample_rate_hz; u64 original_length; body complex64 (float32 re, im)
//   pairs in bin-major order: for i, for j, for c.
// Filters ("CTFFLT1\0"): u32 channels, sources, bins; u32 taps[sources];
//   body complex64 per bin, column-major over the assembled M x L matrix.
// Factors ("CTFNMF1\0"): u32 sources, bins, frames; u32 bases[sources];
//   f64 floor; body f64: per source B row-major then V row-major.

#pragma once

#include "ctfmnmf/model.hpp"
#include "ctfmnmf/synth.hpp"
#include "ctfmnmf/types.hpp"

#include <string>

namespace ctfmnmf {

void write_spectrogram(const std::string& path, const Spectrogram& spec);
Spectrogram read_spectrogram(const std::string& path);

void write_filters(const std::string& path, const CtfFilters& filters);
CtfFilters read_filters(const std::string& path);

void write_factors(const std::string& path, const NmfFactors& factors);
NmfFactors read_factors(const std::string& path);

}  // namespace ctfmnmf
