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

#pragma once

#include "sentctx/errors.hpp"

#include <cstddef>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace sentctx {

/// One symbol id per position, or several (phone + tone + boundary tag)
/// whose embeddings are summed.
struct TextSequence {
    std::vector<std::vector<std::size_t>> tokens;

    static auto from_ids(const std::vector<std::size_t>& ids) -> TextSequence;
    [[nodiscard]] auto length() const -> std::size_t { return tokens.size(); }
    [[nodiscard]] auto empty() const -> bool { return tokens.empty(); }
};

/// Symbol inventory; id = line number (0-based) in the vocabulary file.
class Vocabulary {
public:
    Vocabulary() = default;
    explicit Vocabulary(std::vector<std::string> symbols);

    static auto load(const std::filesystem::path& path) -> Vocabulary;
    void save(const std::filesystem::path& path) const;

    [[nodiscard]] auto size() const -> std::size_t { return symbols_.size(); }
    [[nodiscard]] auto id(std::string_view symbol) const -> std::optional<std::size_t>;
    [[nodiscard]] auto symbol(std::size_t id) const -> const std::string&;
    [[nodiscard]] auto symbols() const -> const std::vector<std::string>& { return symbols_; }

    /// Whitespace-separated symbols; "a+b" places a and b at one position.
    [[nodiscard]] auto parse(std::string_view text) const -> TextSequence;
    [[nodiscard]] auto format(const TextSequence& text) const -> std::string;

    auto operator==(const Vocabulary& other) const -> bool { return symbols_ == other.symbols_; }

private:
    std::vector<std::string> symbols_;
    std::unordered_map<std::string, std::size_t> index_;
};

auto read_symbol_file(const std::filesystem::path& path, const Vocabulary& vocab) -> TextSequence;

} // namespace sentctx
