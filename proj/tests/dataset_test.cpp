#include "mom/dataset.hpp"
#include "mom/san.hpp"
#include "mom/uci.hpp"

#include "toy.hpp"

#include <gtest/gtest.h>

#include <set>

namespace mom::dataset
{
namespace
{

using chess::GameRecord;
using chess::Position;

GameRecord from_san(const std::vector<std::string>& sans, Color target = Color::White)
{
    GameRecord g;
    g.target_color = target;
    Position pos = Position::initial();
    for (const auto& s : sans)
    {
        const auto m = chess::parse_san(pos, s);
        g.push(pos, m);
        pos = pos.play(m);
    }
    return g;
}

std::string masked_text(const TokenMask& tm)
{
    const std::string text = Vocab::instance().decode(tm.ids);
    std::string out;
    for (std::size_t i = 0; i < text.size(); ++i)
        out += tm.loss_mask[i] ? text[i] : '_';
    return out;
}

TEST(Filter, DropsMiniatures)
{
    const auto g = from_san({"e4", "e5", "Qh5", "Nc6", "Bc4", "Nf6", "Qxf7#"});
    EXPECT_TRUE(filter_corpus({g}).empty());
}

TEST(Filter, DropsDuplicates)
{
    const auto g = toy::games(1, 12, 12)[0];
    EXPECT_EQ(filter_corpus({g, g}).size(), 1u);
}

TEST(Filter, ConstructedFixture)
{
    auto games = toy::games(85, 12, 40, 31);
    const auto shorts = toy::games(5, 6, 9, 32);
    for (int i = 0; i < 10; ++i)
        games.push_back(games[static_cast<std::size_t>(i * 7)]);
    games.insert(games.end(), shorts.begin(), shorts.end());
    ASSERT_EQ(games.size(), 100u);

    std::set<std::string> seen;
    std::size_t expected = 0;
    for (const auto& g : games)
        if (g.plies() >= 10 && seen.insert(chess::movetext(g)).second)
            ++expected;
    EXPECT_EQ(expected, 85u);
    const auto kept = filter_corpus(games);
    EXPECT_EQ(kept.size(), 85u);
    for (const auto& g : kept)
        EXPECT_GE(g.full_moves(), 5u);
}

PlayerDataset colored(int white, int black)
{
    PlayerDataset d;
    d.player_id = "p";
    const auto gs = toy::games(white + black, 12, 20, 5);
    for (int i = 0; i < white + black; ++i)
    {
        d.records.push_back(gs[static_cast<std::size_t>(i)]);
        d.records.back().target_color = i < white ? Color::White : Color::Black;
    }
    return d;
}

TEST(Balance, Downsamples)
{
    const auto b = balance_colors(colored(60, 40), Rng(960));
    EXPECT_EQ(b.count(Color::White), 40u);
    EXPECT_EQ(b.count(Color::Black), 40u);
}

TEST(Balance, AlreadyBalancedIsUnchanged)
{
    const auto d = colored(40, 40);
    const auto b = balance_colors(d, Rng(960));
    ASSERT_EQ(b.records.size(), d.records.size());
    for (std::size_t i = 0; i < d.records.size(); ++i)
        EXPECT_EQ(chess::movetext(b.records[i]), chess::movetext(d.records[i]));
}

TEST(Balance, SeededSelectionReplays)
{
    const auto d = colored(7, 3);
    const auto a = balance_colors(d, Rng(960));
    const auto b = balance_colors(d, Rng(960));
    EXPECT_EQ(a.count(Color::White), 3u);
    EXPECT_EQ(a.count(Color::Black), 3u);
    EXPECT_EQ(manifest(a), manifest(b));
}

TEST(Split, EightyPercentPerColor)
{
    for (int n : {10, 37, 80, 101})
    {
        auto d = prepare_player("p", toy::games(n, 12, 30, static_cast<std::uint64_t>(n)), Rng(960));
        const auto train = d.subset(Split::Train).size();
        const double target = 0.8 * static_cast<double>(d.records.size());
        EXPECT_LE(std::abs(static_cast<double>(train) - target), 1.0) << n;
        EXPECT_LE(std::abs(static_cast<long>(d.count(Color::White)) - static_cast<long>(d.count(Color::Black))), 1);
        for (const auto& r : d.records)
            EXPECT_NO_THROW(player_mask(r));
    }
}

TEST(Mask, WhiteTarget)
{
    const auto tm = player_mask(from_san({"e4", "e5"}, Color::White));
    EXPECT_EQ(Vocab::instance().decode(tm.ids), ";1. e4 e5");
    EXPECT_EQ(masked_text(tm), "____e4 __");
}

TEST(Mask, BlackTarget)
{
    const auto tm = player_mask(from_san({"e4", "e5"}, Color::Black));
    EXPECT_EQ(masked_text(tm), "_______e5");
}

TEST(Mask, SpanCount)
{
    const auto g = from_san({"e4", "e5", "Nf3", "Nc6", "Bb5", "a6", "Ba4", "Nf6", "O-O", "Be7"});
    const std::string m = masked_text(player_mask(g));
    int spans = 0;
    for (std::size_t i = 0; i < m.size(); ++i)
        if (m[i] != '_' && (i == 0 || m[i - 1] == '_'))
            ++spans;
    EXPECT_EQ(spans, 5);
    EXPECT_NE(m.find("O-O "), std::string::npos);
    EXPECT_EQ(m.find("a6"), std::string::npos);
}

TEST(Mask, ColorsAreDisjoint)
{
    for (const auto& g : toy::games(10, 10, 40, 9))
    {
        GameRecord w = g, b = g;
        w.target_color = Color::White;
        b.target_color = Color::Black;
        const auto mw = player_mask(w), mb = player_mask(b);
        std::size_t total = 0;
        for (std::size_t i = 0; i < mw.ids.size(); ++i)
        {
            EXPECT_FALSE(mw.loss_mask[i] && mb.loss_mask[i]);
            total += mw.loss_mask[i] + mb.loss_mask[i];
        }
        EXPECT_GT(mw.masked_count(), 0u);
        EXPECT_GT(mb.masked_count(), 0u);
        EXPECT_LT(total, mw.ids.size());
    }
}

TEST(Mask, RejectsBadReplay)
{
    auto g = from_san({"e4", "e5"});
    g.sans[1] = "e6";
    EXPECT_THROW(player_mask(g), IllegalReplay);
}

std::unique_ptr<uci::UciSession> stub_session()
{
    auto s = std::make_unique<uci::UciSession>(std::make_unique<uci::ProcessChannel>(MOM_STUB_ENGINE));
    s->handshake();
    return s;
}

GameRecord fen_record(const std::string& fen)
{
    GameRecord g;
    g.set_tag("FEN", fen);
    g.set_tag("SetUp", "1");
    g.set_tag("Result", "1-0");
    return g;
}

TEST(MateComplete, AppendsShortMate)
{
    auto engine = stub_session();
    GameRecord g = fen_record("k7/8/2K5/8/8/8/1Q6/8 w - - 0 1");
    Position pos = g.final_position();
    const auto pre = chess::parse_san(pos, "Qg2");
    g.push(pos, pre);
    pos = pos.play(pre);
    const auto reply = chess::parse_san(pos, "Kb8");
    g.push(pos, reply);
    const GameRecord out = mate_complete(g, *engine);
    ASSERT_GT(out.plies(), g.plies());
    for (std::size_t i = 0; i < g.plies(); ++i)
        EXPECT_EQ(out.moves[i], g.moves[i]);
    EXPECT_TRUE(out.final_position().is_checkmate());
    EXPECT_EQ(out.sans.back().back(), '#');
    EXPECT_LE((out.plies() - g.plies() + 1) / 2, 10u);
    EXPECT_EQ(out.tag("Result"), "1-0");
}

TEST(MateComplete, MateInTwoAddsTwoMoves)
{
    auto engine = stub_session();
    const GameRecord g = fen_record("k7/8/2K5/8/8/8/8/6Q1 w - - 0 1");
    const GameRecord out = mate_complete(g, *engine);
    EXPECT_EQ(out.plies(), 3u);
    EXPECT_TRUE(out.final_position().is_checkmate());
}

TEST(MateComplete, DrawnPositionUnchanged)
{
    auto engine = stub_session();
    const GameRecord g = fen_record("8/8/8/4k3/8/8/8/4K3 w - - 0 1");
    const GameRecord out = mate_complete(g, *engine);
    EXPECT_EQ(out.plies(), 0u);
    EXPECT_EQ(out.tag("Result"), "1-0");
}

TEST(MateComplete, MateBeyondTenIsIgnored)
{
    const std::string fen = "k7/8/2K5/8/8/8/8/6Q1 w - - 0 1";
    const std::vector<std::string> transcript = {
        "> uci", "< uciok", "> isready", "< readyok",
        "> " + uci::position_command({}, fen), "> go mate 10",
        "< info depth 23 score mate 12 pv g1b1 a8a7 b1b7", "< bestmove g1b1"};
    uci::UciSession s(std::make_unique<uci::ReplayChannel>(transcript));
    s.handshake();
    const GameRecord out = mate_complete(fen_record(fen), s);
    EXPECT_EQ(out.plies(), 0u);
}

TEST(MateComplete, EngineDeathIsUnavailable)
{
    const std::vector<std::string> transcript = {"> uci", "< uciok", "> isready", "< readyok"};
    uci::UciSession s(std::make_unique<uci::ReplayChannel>(transcript), std::chrono::milliseconds(50));
    s.handshake();
    EXPECT_THROW(mate_complete(fen_record("k7/8/2K5/8/8/8/8/6Q1 w - - 0 1"), s), uci::EngineUnavailable);
}

} // namespace
} // namespace mom::dataset
