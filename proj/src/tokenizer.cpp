#include "mom/tokenizer.hpp"

static_assert(mom::Vocab::kChars.size() == mom::Vocab::kSize);

namespace mom
{

Vocab::Vocab()
{
    index_.fill(-1);
    for (std::size_t i = 0; i < kChars.size(); ++i)
        index_[static_cast<unsigned char>(kChars[i])] = static_cast<int>(i);
}

const Vocab& Vocab::instance()
{
    static const Vocab vocab;
    return vocab;
}

TokenId Vocab::id(char c) const
{
    const int i = index_[static_cast<unsigned char>(c)];
    if (i < 0)
        throw UnknownCharacter(0, c);
    return static_cast<TokenId>(i);
}

char Vocab::token(TokenId id) const
{
    if (id >= kSize)
        throw InvalidTokenId("token id " + std::to_string(id) + " out of range");
    return kChars[id];
}

std::vector<TokenId> Vocab::encode(std::string_view text) const
{
    std::vector<TokenId> ids;
    ids.reserve(text.size());
    for (std::size_t i = 0; i < text.size(); ++i)
    {
        const int id = index_[static_cast<unsigned char>(text[i])];
        if (id < 0)
            throw UnknownCharacter(i, text[i]);
        ids.push_back(static_cast<TokenId>(id));
    }
    return ids;
}

std::string Vocab::decode(const std::vector<TokenId>& ids) const
{
    std::string out;
    out.reserve(ids.size());
    for (TokenId id : ids)
        out += token(id);
    return out;
}

std::vector<TokenId> Vocab::game_prefix() const
{
    return encode(";1.");
}

std::string Vocab::dump() const
{
    std::string out;
    for (char c : kChars)
    {
        out += c;
        out += '\n';
    }
    return out;
}

void Vocab::check_dump(std::string_view text)
{
    std::string expected = instance().dump();
    if (text != expected)
        throw std::runtime_error("vocabulary dump does not match the built-in vocabulary");
}

std::size_t TokenMask::masked_count() const
{
    std::size_t n = 0;
    for (bool b : loss_mask)
        n += b;
    return n;
}

} // namespace mom
