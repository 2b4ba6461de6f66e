// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.


#include "sentctx/features/audio.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

namespace sentctx::features {

namespace {

void put_u16(std::ostream& out, std::uint16_t v)
{
    const std::array<char, 2> b { static_cast<char>(v & 0xff), static_cast<char>(v >> 8) };
    out.write(b.data(), 2);
}

void put_u32(std::ostream& out, std::uint32_t v)
{
    for (int i = 0; i < 4; ++i) {
        out.put(static_cast<char>((v >> (8 * i)) & 0xff));
    }
}

auto get_u16(const unsigned char* p) -> std::uint16_t
{
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

auto get_u32(const unsigned char* p) -> std::uint32_t
{
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8)
        | (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

} // namespace

auto is_supported_sample_rate(int rate) -> bool { return rate == 22050 || rate == 16000; }

void validate(const Waveform& wav)
{
    if (!is_supported_sample_rate(wav.sample_rate)) {
        throw InputError("waveform: unsupported sample rate " + std::to_string(wav.sample_rate)
                         + " (expected 22050 or 16000)");
    }
    if (wav.samples.empty()) {
        throw InputError("waveform: no samples");
    }
}

void write_wav(const std::filesystem::path& path, const Waveform& wav)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw InputError("wav: cannot open " + path.string() + " for writing");
    }
    const auto data_bytes = static_cast<std::uint32_t>(wav.samples.size() * 2);
    out.write("RIFF", 4);
    put_u32(out, 36 + data_bytes);
    out.write("WAVE", 4);
    out.write("fmt ", 4);
    put_u32(out, 16);
    put_u16(out, 1); // PCM
    put_u16(out, 1); // mono
    put_u32(out, static_cast<std::uint32_t>(wav.sample_rate));
    put_u32(out, static_cast<std::uint32_t>(wav.sample_rate) * 2);
    put_u16(out, 2);
    put_u16(out, 16);
    out.write("data", 4);
    put_u32(out, data_bytes);
    for (const double s : wav.samples) {
        const double clipped = std::clamp(s, -1.0, 1.0);
        const auto q = static_cast<std::int16_t>(std::lround(clipped * 32767.0));
        put_u16(out, static_cast<std::uint16_t>(q));
    }
    if (!out) {
        throw InputError("wav: write failed for " + path.string());
    }
}

auto read_wav(const std::filesystem::path& path) -> Waveform
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw InputError("wav: cannot open " + path.string());
    }
    const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                           std::istreambuf_iterator<char>());
    const auto fail = [&](const std::string& why) -> InputError {
        return InputError("wav: " + path.string() + ": " + why);
    };
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0
        || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
        throw fail("not a RIFF/WAVE file");
    }
    Waveform wav;
    bool have_fmt = false;
    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const unsigned char* chunk = bytes.data() + pos;
        const std::uint32_t size = get_u32(chunk + 4);
        const std::size_t body = pos + 8;
        if (body + size > bytes.size()) {
            throw fail("truncated chunk");
        }
        if (std::memcmp(chunk, "fmt ", 4) == 0) {
            if (size < 16) {
                throw fail("short fmt chunk");
            }
            const std::uint16_t format = get_u16(bytes.data() + body);
            const std::uint16_t channels = get_u16(bytes.data() + body + 2);
            const std::uint16_t bits = get_u16(bytes.data() + body + 14);
            if (format != 1 || channels != 1 || bits != 16) {
                throw fail("only 16-bit PCM mono is supported");
            }
            wav.sample_rate = static_cast<int>(get_u32(bytes.data() + body + 4));
            have_fmt = true;
        } else if (std::memcmp(chunk, "data", 4) == 0) {
            if (!have_fmt) {
                throw fail("data chunk before fmt chunk");
            }
            wav.samples.resize(size / 2);
            for (std::size_t i = 0; i < wav.samples.size(); ++i) {
                const auto raw = static_cast<std::int16_t>(get_u16(bytes.data() + body + 2 * i));
                wav.samples[i] = static_cast<double>(raw) / 32767.0;
            }
            return wav;
        }
        pos = body + size + (size & 1u);
    }
    throw fail("no data chunk");
}

auto rms(const std::vector<double>& samples) -> double
{
    if (samples.empty()) {
        return 0.0;
    }
    double acc = 0.0;
    for (const double s : samples) {
        acc += s * s;
    }
    return std::sqrt(acc / static_cast<double>(samples.size()));
}

} // namespace sentctx::features
