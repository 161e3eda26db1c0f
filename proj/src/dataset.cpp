#include "mom/dataset.hpp"

#include "mom/hash.hpp"
#include "mom/san.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace mom::dataset
{

using chess::GameResult;
using chess::Move;
using chess::Position;

std::string color_name(Color c)
{
    return c == Color::White ? "white" : "black";
}

std::vector<GameRecord> PlayerDataset::subset(Split s) const
{
    std::vector<GameRecord> out;
    for (std::size_t i = 0; i < records.size() && i < split.size(); ++i)
        if (split[i] == s)
            out.push_back(records[i]);
    return out;
}

std::size_t PlayerDataset::count(Color c) const
{
    return static_cast<std::size_t>(
        std::count_if(records.begin(), records.end(), [c](const GameRecord& r) { return r.target_color == c; }));
}

std::vector<GameRecord> filter_corpus(const std::vector<GameRecord>& records, std::size_t min_full_moves)
{
    std::vector<GameRecord> out;
    std::unordered_set<std::string> seen;
    for (const GameRecord& r : records)
    {
        if (r.full_moves() < min_full_moves)
            continue;
        const std::string key = r.tag("FEN") + "|" + chess::movetext(r);
        if (!seen.insert(key).second)
            continue;
        out.push_back(r);
    }
    return out;
}

PlayerDataset balance_colors(const PlayerDataset& data, Rng rng)
{
    std::vector<std::size_t> white, black;
    for (std::size_t i = 0; i < data.records.size(); ++i)
        (data.records[i].target_color == Color::White ? white : black).push_back(i);
    std::vector<std::size_t>& big = white.size() > black.size() ? white : black;
    const std::size_t keep = std::min(white.size(), black.size());
    std::vector<bool> drop(data.records.size(), false);
    if (big.size() > keep + 1)
    {
        rng.shuffle(big);
        for (std::size_t i = keep; i < big.size(); ++i)
            drop[big[i]] = true;
    }
    PlayerDataset out;
    out.player_id = data.player_id;
    for (std::size_t i = 0; i < data.records.size(); ++i)
    {
        if (drop[i])
            continue;
        out.records.push_back(data.records[i]);
        if (i < data.split.size())
            out.split.push_back(data.split[i]);
    }
    if (out.split.size() != out.records.size())
        out.split.clear();
    return out;
}

void assign_splits(PlayerDataset& data, Rng rng, double train_fraction)
{
    data.split.assign(data.records.size(), Split::Test);
    for (Color c : {Color::White, Color::Black})
    {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < data.records.size(); ++i)
            if (data.records[i].target_color == c)
                idx.push_back(i);
        Rng stream = rng.split(color_name(c));
        stream.shuffle(idx);
        const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(idx.size())));
        for (std::size_t k = 0; k < n_train; ++k)
            data.split[idx[k]] = Split::Train;
    }
}

PlayerDataset prepare_player(const std::string& player_id, const std::vector<GameRecord>& records, Rng rng)
{
    PlayerDataset d;
    d.player_id = player_id;
    d.records = filter_corpus(records);
    d = balance_colors(d, rng.split("balance"));
    assign_splits(d, rng.split("split"));
    return d;
}

GameRecord mate_complete(const GameRecord& record, uci::UciSession& engine, int max_mate)
{
    const Position final_pos = record.final_position();
    if (final_pos.legal_moves().empty())
        return record;
    std::vector<std::string> uci_moves;
    for (const Move& m : record.moves)
        uci_moves.push_back(m.uci());
    uci::SearchResult res;
    try
    {
        res = engine.search(uci::position_command(uci_moves, record.tag("FEN")), "go mate " + std::to_string(max_mate));
    }
    catch (const uci::EngineTimeout& e)
    {
        throw uci::EngineUnavailable(e.what());
    }
    catch (const uci::ProtocolViolation& e)
    {
        throw uci::EngineUnavailable(e.what());
    }
    const uci::InfoLine* best = nullptr;
    for (const auto& l : res.lines)
        if (l.multipv == 1)
            best = &l;
    if (!best || !best->mate || *best->mate <= 0 || *best->mate > max_mate || best->pv.empty())
        return record;

    GameRecord out = record;
    Position pos = final_pos;
    for (const std::string& u : best->pv)
    {
        const auto m = chess::parse_uci(pos, u);
        if (!m)
            return record;
        out.push(pos, *m);
        pos = pos.play(*m);
    }
    if (!pos.is_checkmate())
        return record;
    out.result = pos.side_to_move() == Color::White ? GameResult::BlackWin : GameResult::WhiteWin;
    out.set_tag("Result", chess::result_string(out.result));
    return out;
}

std::string sequence_text(const GameRecord& record)
{
    if (!record.tag("FEN").empty())
        throw IllegalReplay("game does not start from the initial position");
    return ";" + chess::movetext(record);
}

std::string prefix_text(const GameRecord& record, std::size_t ply)
{
    if (!record.tag("FEN").empty())
        throw IllegalReplay("game does not start from the initial position");
    if (ply > record.plies())
        throw std::out_of_range("prefix longer than the game");
    GameRecord head = record;
    head.moves.resize(ply);
    head.sans.resize(ply);
    std::string text = ";" + chess::movetext(head);
    if (ply > 0)
        text += " ";
    if (ply % 2 == 0)
        text += std::to_string(ply / 2 + 1) + ". ";
    return text;
}

TokenMask player_mask(const GameRecord& record)
{
    if (!record.tag("FEN").empty())
        throw IllegalReplay("game does not start from the initial position");
    if (record.sans.size() != record.moves.size())
        throw IllegalReplay("SAN list does not match move list");
    Position pos = Position::initial();
    std::string text = ";";
    std::vector<bool> mask(1, false);
    auto append = [&](const std::string& s, bool masked) {
        text += s;
        mask.insert(mask.end(), s.size(), masked);
    };
    bool prev_target = false;
    for (std::size_t i = 0; i < record.moves.size(); ++i)
    {
        if (!pos.is_legal(record.moves[i]) || chess::to_san(pos, record.moves[i]) != record.sans[i])
            throw IllegalReplay("move " + std::to_string(i + 1) + " does not replay legally");
        const bool white = pos.side_to_move() == Color::White;
        if (i > 0)
            append(" ", prev_target);
        if (white)
            append(std::to_string(pos.fullmove_number()) + ". ", false);
        const bool target = pos.side_to_move() == record.target_color;
        append(record.sans[i], target);
        prev_target = target;
        pos = pos.play(record.moves[i]);
    }
    TokenMask tm;
    tm.ids = Vocab::instance().encode(text);
    tm.loss_mask = std::move(mask);
    return tm;
}

std::string manifest(const PlayerDataset& data)
{
    std::string out;
    for (std::size_t i = 0; i < data.records.size(); ++i)
    {
        const GameRecord& r = data.records[i];
        const std::string split = i < data.split.size() ? (data.split[i] == Split::Train ? "train" : "test") : "none";
        out += data.player_id + " " + split + " " + color_name(r.target_color) + " " + std::to_string(r.plies()) + " " +
               content_hash(chess::movetext(r)) + "\n";
    }
    return out;
}

} // namespace mom::dataset
