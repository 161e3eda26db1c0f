#include "mom/pgn.hpp"

#include "mom/san.hpp"

#include <cctype>
#include <optional>

namespace mom::chess
{

std::string result_string(GameResult r)
{
    switch (r)
    {
    case GameResult::WhiteWin: return "1-0";
    case GameResult::BlackWin: return "0-1";
    case GameResult::Draw: return "1/2-1/2";
    case GameResult::Unfinished: return "*";
    }
    return "*";
}

std::string GameRecord::tag(std::string_view key) const
{
    for (const auto& [k, v] : tags)
        if (k == key)
            return v;
    return {};
}

void GameRecord::set_tag(const std::string& key, const std::string& value)
{
    for (auto& [k, v] : tags)
    {
        if (k == key)
        {
            v = value;
            return;
        }
    }
    tags.emplace_back(key, value);
}

namespace
{

Position start_position(const GameRecord& g)
{
    const std::string fen = g.tag("FEN");
    return fen.empty() ? Position::initial() : Position::from_fen(fen);
}

std::optional<GameResult> parse_result(std::string_view s)
{
    if (s == "1-0")
        return GameResult::WhiteWin;
    if (s == "0-1")
        return GameResult::BlackWin;
    if (s == "1/2-1/2")
        return GameResult::Draw;
    if (s == "*")
        return GameResult::Unfinished;
    return std::nullopt;
}

bool is_delim(char c)
{
    return std::isspace(static_cast<unsigned char>(c)) || c == '{' || c == '}' || c == '(' || c == ')' || c == '[' ||
           c == ']' || c == ';';
}

class PgnReader
{
public:
    PgnReader(std::string_view text, std::string_view player) : text_(text), player_(player) {}

    PgnParseResult run()
    {
        while (pos_ < text_.size())
        {
            const char c = text_[pos_];
            if (std::isspace(static_cast<unsigned char>(c)))
            {
                ++pos_;
            }
            else if (c == '%' && (pos_ == 0 || text_[pos_ - 1] == '\n'))
            {
                skip_line();
            }
            else if (c == '[')
            {
                if (in_movetext_)
                    finish_game(std::nullopt);
                read_tag();
            }
            else if (c == '{')
            {
                skip_until('}');
            }
            else if (c == ';')
            {
                skip_line();
            }
            else if (c == '(')
            {
                skip_variation();
            }
            else if (c == ')' || c == ']' || c == '}')
            {
                fail("unbalanced '" + std::string(1, c) + "'");
                ++pos_;
            }
            else
            {
                read_token();
            }
        }
        if (in_movetext_ || has_tags_)
            finish_game(std::nullopt);
        return std::move(out_);
    }

private:
    void skip_line()
    {
        while (pos_ < text_.size() && text_[pos_] != '\n')
            ++pos_;
    }

    void skip_until(char close)
    {
        while (pos_ < text_.size() && text_[pos_] != close)
            ++pos_;
        if (pos_ < text_.size())
            ++pos_;
    }

    void skip_variation()
    {
        int depth = 0;
        while (pos_ < text_.size())
        {
            const char c = text_[pos_++];
            if (c == '{')
                skip_until('}');
            else if (c == '(')
                ++depth;
            else if (c == ')' && --depth == 0)
                return;
        }
        fail("unterminated variation");
    }

    void read_tag()
    {
        ++pos_; // '['
        std::string key;
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_])))
            ++pos_;
        while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_])) && text_[pos_] != '"' &&
               text_[pos_] != ']')
            key += text_[pos_++];
        while (pos_ < text_.size() && text_[pos_] != '"' && text_[pos_] != ']')
            ++pos_;
        std::string value;
        if (pos_ < text_.size() && text_[pos_] == '"')
        {
            ++pos_;
            while (pos_ < text_.size() && text_[pos_] != '"')
            {
                if (text_[pos_] == '\\' && pos_ + 1 < text_.size())
                    ++pos_;
                value += text_[pos_++];
            }
            ++pos_;
        }
        skip_until(']');
        has_tags_ = true;
        current_.set_tag(key, value);
        if (key == "FEN")
        {
            try
            {
                board_ = Position::from_fen(value);
            }
            catch (const FenError& e)
            {
                fail(std::string("bad FEN tag: ") + e.what());
            }
        }
    }

    void read_token()
    {
        const std::size_t start = pos_;
        while (pos_ < text_.size() && !is_delim(text_[pos_]))
            ++pos_;
        std::string_view tok = text_.substr(start, pos_ - start);
        in_movetext_ = true;

        if (auto r = parse_result(tok))
        {
            finish_game(r);
            return;
        }
        if (tok[0] == '$')
            return;
        // Move numbers, possibly glued to the move: "12." "12..." "12.Nf3".
        std::size_t i = 0;
        while (i < tok.size() && std::isdigit(static_cast<unsigned char>(tok[i])))
            ++i;
        if (i > 0 && i < tok.size() && tok[i] == '.')
        {
            while (i < tok.size() && tok[i] == '.')
                ++i;
            tok.remove_prefix(i);
        }
        else if (i == tok.size())
        {
            fail("stray number '" + std::string(tok) + "'");
            return;
        }
        while (!tok.empty() && tok.front() == '.')
            tok.remove_prefix(1);
        if (tok.empty())
            return;
        if (failed_)
            return;

        std::string san(tok);
        while (!san.empty() && (san.back() == '!' || san.back() == '?'))
            san.pop_back();
        if (san == "0-0" || san == "0-0+" || san == "0-0#")
            san.replace(0, 3, "O-O");
        else if (san.rfind("0-0-0", 0) == 0)
            san.replace(0, 5, "O-O-O");
        if (san.empty())
            return;
        try
        {
            const Move m = parse_san(board_, san);
            current_.push(board_, m);
            board_ = board_.play(m);
        }
        catch (const SanError& e)
        {
            fail(std::string(e.what()) + " at ply " + std::to_string(current_.plies() + 1));
        }
    }

    void fail(const std::string& msg)
    {
        if (!failed_)
            out_.errors.push_back({game_index_, msg});
        failed_ = true;
    }

    void finish_game(std::optional<GameResult> result)
    {
        if (!result)
        {
            result = parse_result(current_.tag("Result"));
            if (!result)
                result = GameResult::Unfinished;
        }
        current_.result = *result;
        if (!failed_)
        {
            if (board_.is_checkmate())
            {
                const GameResult winner =
                    board_.side_to_move() == Color::White ? GameResult::BlackWin : GameResult::WhiteWin;
                if (current_.result == GameResult::Unfinished)
                    current_.result = winner;
                else if (current_.result != winner)
                    fail("result inconsistent with checkmate");
            }
            else if (board_.is_stalemate())
            {
                if (current_.result == GameResult::Unfinished)
                    current_.result = GameResult::Draw;
                else if (current_.result != GameResult::Draw)
                    fail("result inconsistent with stalemate");
            }
        }
        if (!failed_)
        {
            if (!player_.empty() && current_.tag("Black") == player_ && current_.tag("White") != player_)
                current_.target_color = Color::Black;
            out_.games.push_back(std::move(current_));
        }
        ++game_index_;
        current_ = GameRecord{};
        board_ = Position::initial();
        failed_ = false;
        in_movetext_ = false;
        has_tags_ = false;
    }

    std::string_view text_;
    std::string_view player_;
    std::size_t pos_ = 0;
    PgnParseResult out_;
    GameRecord current_;
    Position board_ = Position::initial();
    std::size_t game_index_ = 0;
    bool failed_ = false;
    bool in_movetext_ = false;
    bool has_tags_ = false;
};

} // namespace

Position GameRecord::final_position() const
{
    Position pos = start_position(*this);
    for (const Move& m : moves)
        pos = pos.play(m);
    return pos;
}

void GameRecord::push(const Position& before, const Move& m)
{
    moves.push_back(m);
    sans.push_back(to_san(before, m));
}

PgnParseResult parse_pgn(std::string_view text, std::string_view target_player)
{
    return PgnReader(text, target_player).run();
}

std::string movetext(const GameRecord& game)
{
    const Position start = start_position(game);
    int number = start.fullmove_number();
    bool white = start.side_to_move() == Color::White;
    std::string out;
    for (std::size_t i = 0; i < game.sans.size(); ++i)
    {
        if (!out.empty())
            out += ' ';
        if (white)
            out += std::to_string(number) + ". ";
        else if (i == 0)
            out += std::to_string(number) + "... ";
        out += game.sans[i];
        if (!white)
            ++number;
        white = !white;
    }
    return out;
}

std::string write_pgn(const GameRecord& game)
{
    std::string out;
    bool has_result = false;
    for (const auto& [k, v] : game.tags)
    {
        std::string value = k == "Result" ? result_string(game.result) : v;
        has_result |= k == "Result";
        out += "[" + k + " \"" + value + "\"]\n";
    }
    if (!has_result)
        out += "[Result \"" + result_string(game.result) + "\"]\n";
    out += '\n';
    const std::string text = movetext(game);
    out += text;
    if (!text.empty())
        out += ' ';
    out += result_string(game.result);
    out += "\n\n";
    return out;
}

} // namespace mom::chess
