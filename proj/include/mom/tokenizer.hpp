#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mom
{

using TokenId = std::uint8_t;

class UnknownCharacter : public std::invalid_argument
{
public:
    UnknownCharacter(std::size_t position, char c)
        : std::invalid_argument("character '" + std::string(1, c) + "' at position " + std::to_string(position) +
                                " is outside the vocabulary"),
          position_(position)
    {
    }
    std::size_t position() const { return position_; }

private:
    std::size_t position_;
};

class InvalidTokenId : public std::invalid_argument
{
public:
    using std::invalid_argument::invalid_argument;
};

/// The fixed 32-character PGN vocabulary. Ids follow category order: files, digits,
/// pieces, castling letter, move symbols, separators.
class Vocab
{
public:
    static constexpr std::size_t kSize = 32;
    static constexpr std::string_view kChars = "abcdefgh0123456789KQRBNOx+#=-. ;";

    static const Vocab& instance();

    TokenId id(char c) const;
    char token(TokenId id) const;
    bool contains(char c) const { return index_[static_cast<unsigned char>(c)] >= 0; }

    std::vector<TokenId> encode(std::string_view text) const;
    std::string decode(const std::vector<TokenId>& ids) const;

    /// Token ids of ";1.", the game-start delimiter.
    std::vector<TokenId> game_prefix() const;

    /// One character per line, in id order.
    std::string dump() const;
    /// Inverse of dump(); throws if it does not describe this vocabulary.
    static void check_dump(std::string_view text);

private:
    Vocab();
    std::array<int, 256> index_{};
};

/// A token sequence with its loss mask. loss_mask[t] marks token t as a prediction target;
/// it is scored from the logits at position t − 1, so loss_mask[0] is always false.
struct TokenMask
{
    std::vector<TokenId> ids;
    std::vector<bool> loss_mask;

    std::size_t masked_count() const;
};

} // namespace mom
