#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "roomloc/analysis.hpp"
#include "roomloc/signal_chain.hpp"

namespace roomloc {

// Mono WAV, 32-bit float. Multi-channel files are rejected.
void write_wav(const std::filesystem::path& path, const Waveform& waveform);
// Reads mono 32-bit float or 16-bit PCM (scaled to [-1, 1)).
Waveform read_wav(const std::filesystem::path& path);

// CSV with header "sample,value"; the sample rate is not stored and must be supplied.
void write_waveform_csv(const std::filesystem::path& path, const Waveform& waveform);
Waveform read_waveform_csv(const std::filesystem::path& path, double fs);

// Picks WAV or CSV by extension.
Waveform read_waveform(const std::filesystem::path& path, double csv_fs);

// "band_hz,rt60_s,r2,status"
std::string band_rt60_csv(const std::vector<BandRt60>& bands);
// "band_hz,max_spl_db"
std::string rta_csv(const RtaResult& rta);

void write_text(const std::filesystem::path& path, const std::string& content);

}  // namespace roomloc
