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

#include "sentctx/encoder/text.hpp"

#include <fstream>
#include <sstream>

namespace sentctx {

auto TextSequence::from_ids(const std::vector<std::size_t>& ids) -> TextSequence
{
    TextSequence text;
    text.tokens.reserve(ids.size());
    for (const std::size_t id : ids) {
        text.tokens.push_back({ id });
    }
    return text;
}

Vocabulary::Vocabulary(std::vector<std::string> symbols)
    : symbols_(std::move(symbols))
{
    for (std::size_t i = 0; i < symbols_.size(); ++i) {
        const auto& s = symbols_[i];
        if (s.empty() || s.find_first_of(" \t+") != std::string::npos) {
            throw InputError("vocabulary: invalid symbol '" + s + "' on line "
                             + std::to_string(i + 1));
        }
        if (!index_.emplace(s, i).second) {
            throw InputError("vocabulary: duplicate symbol '" + s + "'");
        }
    }
}

auto Vocabulary::load(const std::filesystem::path& path) -> Vocabulary
{
    std::ifstream in(path);
    if (!in) {
        throw InputError("vocabulary: cannot open " + path.string());
    }
    std::vector<std::string> symbols;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        symbols.push_back(line);
    }
    while (!symbols.empty() && symbols.back().empty()) {
        symbols.pop_back();
    }
    return Vocabulary(std::move(symbols));
}

void Vocabulary::save(const std::filesystem::path& path) const
{
    std::ofstream out(path);
    if (!out) {
        throw InputError("vocabulary: cannot write " + path.string());
    }
    for (const auto& s : symbols_) {
        out << s << '\n';
    }
}

auto Vocabulary::id(std::string_view symbol) const -> std::optional<std::size_t>
{
    const auto it = index_.find(std::string(symbol));
    if (it == index_.end()) {
        return std::nullopt;
    }
    return it->second;
}

auto Vocabulary::symbol(std::size_t id) const -> const std::string&
{
    if (id >= symbols_.size()) {
        throw InputError("vocabulary: id " + std::to_string(id) + " out of range");
    }
    return symbols_[id];
}

auto Vocabulary::parse(std::string_view text) const -> TextSequence
{
    TextSequence out;
    std::istringstream words { std::string(text) };
    std::string word;
    while (words >> word) {
        std::vector<std::size_t> bag;
        std::size_t begin = 0;
        while (begin <= word.size()) {
            const std::size_t end = std::min(word.find('+', begin), word.size());
            const std::string part = word.substr(begin, end - begin);
            const auto found = id(part);
            if (!found) {
                throw InputError("unknown symbol '" + part + "' at position "
                                 + std::to_string(out.tokens.size()));
            }
            bag.push_back(*found);
            begin = end + 1;
        }
        out.tokens.push_back(std::move(bag));
    }
    return out;
}

auto Vocabulary::format(const TextSequence& text) const -> std::string
{
    std::string out;
    for (std::size_t i = 0; i < text.tokens.size(); ++i) {
        if (i > 0) {
            out += ' ';
        }
        for (std::size_t j = 0; j < text.tokens[i].size(); ++j) {
            if (j > 0) {
                out += '+';
            }
            out += symbol(text.tokens[i][j]);
        }
    }
    return out;
}

auto read_symbol_file(const std::filesystem::path& path, const Vocabulary& vocab) -> TextSequence
{
    std::ifstream in(path);
    if (!in) {
        throw InputError("symbol file: cannot open " + path.string());
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    auto text = vocab.parse(buffer.str());
    if (text.empty()) {
        throw InputError("symbol file: " + path.string() + " contains no symbols");
    }
    return text;
}

} // namespace sentctx
