#include "roomloc/io.hpp"

#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "roomloc/errors.hpp"

namespace roomloc {

namespace {

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>(v >> 8));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

std::uint16_t get_u16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | p[1] << 8); }

std::string read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

}  // namespace

void write_text(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << content;
  if (!out) throw IoError("write failed: " + path.string());
}

void write_wav(const std::filesystem::path& path, const Waveform& w) {
  if (!(w.fs > 0) || w.fs > 4294967295.0) throw ContractError("write_wav: invalid sample rate");
  const auto rate = static_cast<std::uint32_t>(std::llround(w.fs));
  const auto data_bytes = static_cast<std::uint32_t>(w.samples.size() * 4);
  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  put_u32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, 3);  // IEEE float
  put_u16(out, 1);
  put_u32(out, rate);
  put_u32(out, rate * 4);
  put_u16(out, 4);
  put_u16(out, 32);
  out += "data";
  put_u32(out, data_bytes);
  for (double v : w.samples) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  write_text(path, out);
}

Waveform read_wav(const std::filesystem::path& path) {
  const std::string raw = read_all(path);
  const auto* p = reinterpret_cast<const unsigned char*>(raw.data());
  const std::size_t n = raw.size();
  if (n < 12 || std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0) {
    throw IoError(path.string() + ": not a RIFF/WAVE file");
  }
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  for (std::size_t pos = 12; pos + 8 <= n;) {
    const std::uint32_t size = get_u32(p + pos + 4);
    const std::size_t body = pos + 8;
    if (body + size > n) throw IoError(path.string() + ": truncated chunk");
    if (std::memcmp(p + pos, "fmt ", 4) == 0) {
      if (size < 16) throw IoError(path.string() + ": short fmt chunk");
      format = get_u16(p + body);
      channels = get_u16(p + body + 2);
      rate = get_u32(p + body + 4);
      bits = get_u16(p + body + 14);
      if (format == 0xFFFE && size >= 26) format = get_u16(p + body + 24);  // extensible
      have_fmt = true;
    } else if (std::memcmp(p + pos, "data", 4) == 0) {
      if (!have_fmt) throw IoError(path.string() + ": data chunk before fmt chunk");
      if (channels != 1) throw IoError(path.string() + ": only mono files are supported");
      Waveform w;
      w.fs = rate;
      if (format == 3 && bits == 32) {
        w.samples.resize(size / 4);
        for (std::size_t i = 0; i < w.samples.size(); ++i) w.samples[i] = std::bit_cast<float>(get_u32(p + body + 4 * i));
      } else if (format == 1 && bits == 16) {
        w.samples.resize(size / 2);
        for (std::size_t i = 0; i < w.samples.size(); ++i) {
          w.samples[i] = static_cast<std::int16_t>(get_u16(p + body + 2 * i)) / 32768.0;
        }
      } else {
        throw IoError(path.string() + ": unsupported sample format (need float32 or PCM16)");
      }
      return w;
    }
    pos = body + size + (size & 1);
  }
  throw IoError(path.string() + ": no data chunk");
}

void write_waveform_csv(const std::filesystem::path& path, const Waveform& w) {
  std::string out = "sample,value\n";
  for (std::size_t i = 0; i < w.samples.size(); ++i) out += std::to_string(i) + "," + fmt(w.samples[i]) + "\n";
  write_text(path, out);
}

Waveform read_waveform_csv(const std::filesystem::path& path, double fs) {
  if (!(fs > 0)) throw ContractError("read_waveform_csv: sample rate must be given");
  std::istringstream in(read_all(path));
  std::string line;
  Waveform w;
  w.fs = fs;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && std::isalpha(static_cast<unsigned char>(line[0]))) continue;  // header
    const auto comma = line.find(',');
    const std::string field = comma == std::string::npos ? line : line.substr(comma + 1);
    try {
      std::size_t used = 0;
      w.samples.push_back(std::stod(field, &used));
    } catch (const std::exception&) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": not a number");
    }
  }
  return w;
}

Waveform read_waveform(const std::filesystem::path& path, double csv_fs) {
  if (path.extension() == ".wav" || path.extension() == ".WAV") return read_wav(path);
  return read_waveform_csv(path, csv_fs);
}

std::string band_rt60_csv(const std::vector<BandRt60>& bands) {
  std::string out = "band_hz,rt60_s,r2,status\n";
  for (const auto& b : bands) {
    out += fmt(b.center) + ",";
    if (b.estimate) {
      out += fmt(b.estimate->rt60) + "," + fmt(b.estimate->fit_r2) + ",ok\n";
    } else {
      out += ",,insufficient-decay\n";
    }
  }
  return out;
}

std::string rta_csv(const RtaResult& rta) {
  std::string out = "band_hz,max_spl_db\n";
  for (const auto& b : rta.bands) out += fmt(b.center) + "," + (std::isfinite(b.spl) ? fmt(b.spl) : "-inf") + "\n";
  return out;
}

}  // namespace roomloc
