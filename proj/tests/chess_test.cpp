#include "mom/chess.hpp"
#include "mom/pgn.hpp"
#include "mom/san.hpp"

#include "reference_movegen.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <functional>
#include <random>
#include <set>
#include <unordered_set>

namespace mom::chess
{
namespace
{

constexpr const char* kKiwipete = "r3k2r/p1ppqpb1/bn2pnp1/3PN3/1p2P3/2N2Q1p/PPPBBPPP/R3K2R w KQkq - 0 1";
constexpr const char* kEndgame = "8/2p5/3p4/KP5r/1R3p1k/8/4P1P1/8 w - - 0 1";
constexpr const char* kPromotions = "r3k2r/Pppp1ppp/1b3nbN/nP6/BBP1P3/q4N2/Pp1P2PP/R2Q1RK1 w kq - 0 1";

std::set<std::string> uci_set(const Position& pos)
{
    std::set<std::string> out;
    for (const Move& m : pos.legal_moves())
        out.insert(m.uci());
    return out;
}

std::set<std::string> reference_set(const std::string& fen)
{
    std::set<std::string> out;
    for (const auto& m : reference::legal_moves(reference::from_fen(fen)))
        out.insert(m.uci());
    return out;
}

TEST(Movegen, InitialPositionHasTwentyMoves)
{
    EXPECT_EQ(Position::initial().legal_moves().size(), 20u);
}

TEST(Movegen, CheckmatedPositionHasNoMoves)
{
    Position pos = Position::initial();
    for (const char* san : {"f3", "e5", "g4", "Qh4#"})
        pos = apply_san(pos, san);
    EXPECT_TRUE(pos.is_checkmate());
    EXPECT_TRUE(pos.legal_moves().empty());
}

TEST(Movegen, AfterE4E5Nf3BlackHas29Moves)
{
    Position pos = Position::initial();
    for (const char* san : {"e4", "e5", "Nf3"})
        pos = apply_san(pos, san);
    // Frozen from the brute-force reference generator.
    EXPECT_EQ(reference_set(pos.fen()).size(), 29u);
    EXPECT_EQ(uci_set(pos), reference_set(pos.fen()));
}

TEST(Movegen, RandomWalksAgreeWithReference)
{
    std::mt19937 rng(960);
    for (const char* start : {"rnbqkbnr/pppppppp/8/8/8/8/PPPPPPPP/RNBQKBNR w KQkq - 0 1", kKiwipete, kEndgame, kPromotions})
    {
        for (int walk = 0; walk < 20; ++walk)
        {
            Position pos = Position::from_fen(start);
            for (int ply = 0; ply < 60; ++ply)
            {
                ASSERT_EQ(uci_set(pos), reference_set(pos.fen())) << pos.fen();
                const auto moves = pos.legal_moves();
                if (moves.empty())
                    break;
                pos = pos.play(moves[rng() % moves.size()]);
            }
        }
    }
}

TEST(Perft, InitialMatchesReferenceAndFrozenCounts)
{
    const Position pos = Position::initial();
    const auto ref = reference::from_fen(pos.fen());
    const std::uint64_t frozen[] = {1, 20, 400, 8902};
    for (int depth = 0; depth <= 3; ++depth)
    {
        EXPECT_EQ(perft(pos, depth), frozen[depth]);
        EXPECT_EQ(reference::perft(ref, depth), frozen[depth]);
    }
}

TEST(Perft, TacticalPositionsMatchReference)
{
    for (const char* fen : {kKiwipete, kEndgame, kPromotions})
    {
        const Position pos = Position::from_fen(fen);
        const auto ref = reference::from_fen(fen);
        for (int depth = 1; depth <= 3; ++depth)
            EXPECT_EQ(perft(pos, depth), reference::perft(ref, depth)) << fen << " depth " << depth;
    }
    // Published counts for these positions.
    EXPECT_EQ(perft(Position::from_fen(kKiwipete), 3), 97862u);
    EXPECT_EQ(perft(Position::from_fen(kEndgame), 4), 43238u);
    EXPECT_EQ(perft(Position::from_fen(kPromotions), 3), 9467u);
}

TEST(Perft, ParallelMatchesSerial)
{
    const Position pos = Position::from_fen(kKiwipete);
    EXPECT_EQ(perft_parallel(pos, 3), perft(pos, 3));
    EXPECT_EQ(perft_parallel(Position::initial(), 1), 20u);
}

TEST(Fen, RoundTrips)
{
    for (const char* fen : {kKiwipete, kEndgame, kPromotions})
        EXPECT_EQ(Position::from_fen(fen).fen(), fen);
}

TEST(Fen, RejectsBrokenPositions)
{
    EXPECT_THROW(Position::from_fen("8/8/8/8/8/8/8/8 w - - 0 1"), FenError);
    EXPECT_THROW(Position::from_fen("4k3/8/8/8/8/8/8/4K2K w - - 0 1"), FenError);
    // Side not to move in check.
    EXPECT_THROW(Position::from_fen("4k3/8/8/8/8/8/8/4R1K1 w - - 0 1"), FenError);
    EXPECT_THROW(Position::from_fen("4k3/8/8/8/8/8/8/4K3 w - e3 0 1"), FenError);
    EXPECT_THROW(Position::from_fen("garbage"), FenError);
}

TEST(San, ApplyBasics)
{
    const Position pos = apply_san(Position::initial(), "e4");
    EXPECT_EQ(pos.piece_at(make_square(4, 3)), Piece::WhitePawn);
    EXPECT_EQ(pos.side_to_move(), Color::Black);

    try
    {
        apply_san(Position::initial(), "Ke2");
        FAIL();
    }
    catch (const SanError& e)
    {
        EXPECT_EQ(e.kind(), SanErrorKind::Illegal);
    }
    try
    {
        apply_san(Position::initial(), "Zx9");
        FAIL();
    }
    catch (const SanError& e)
    {
        EXPECT_EQ(e.kind(), SanErrorKind::Malformed);
    }
}

TEST(San, AmbiguityAndDisambiguation)
{
    // Knights on b1 and f1 can both reach d2.
    const Position pos = Position::from_fen("4k3/8/8/8/8/8/8/1N2KN2 w - - 0 1");
    try
    {
        apply_san(pos, "Nd2");
        FAIL();
    }
    catch (const SanError& e)
    {
        EXPECT_EQ(e.kind(), SanErrorKind::Ambiguous);
    }
    EXPECT_NO_THROW(apply_san(pos, "Nbd2"));
    const Move m = parse_san(pos, "Nfd2");
    EXPECT_EQ(to_san(pos, m), "Nfd2");
    // Over-disambiguated input is accepted.
    EXPECT_EQ(parse_san(pos, "Nf1d2"), m);
}

TEST(San, SpecialMoves)
{
    Position pos = Position::from_fen("r3k2r/8/8/8/8/8/8/R3K2R w KQkq - 0 1");
    EXPECT_EQ(to_san(pos, parse_san(pos, "O-O")), "O-O");
    EXPECT_EQ(to_san(pos, parse_san(pos, "O-O-O")), "O-O-O");
    pos = Position::from_fen("4k3/P7/8/8/8/8/8/4K3 w - - 0 1");
    EXPECT_EQ(to_san(pos, parse_san(pos, "a8=Q")), "a8=Q+");
    EXPECT_THROW(parse_san(pos, "a8"), SanError);
    pos = Position::from_fen("4k3/8/8/3pP3/8/8/8/4K3 w - d6 0 1");
    EXPECT_EQ(to_san(pos, parse_san(pos, "exd6")), "exd6");
}

TEST(San, RoundTripWithinFourPlies)
{
    std::unordered_set<std::string> seen;
    std::function<void(const Position&, int)> walk = [&](const Position& pos, int depth) {
        if (!seen.insert(pos.fen()).second)
            return;
        for (const Move& m : pos.legal_moves())
        {
            const std::string san = to_san(pos, m);
            ASSERT_TRUE(is_well_formed_san(san)) << san;
            ASSERT_EQ(parse_san(pos, san), m) << pos.fen() << " " << san;
            if (depth > 1)
                walk(pos.play(m), depth - 1);
        }
    };
    // Positions at plies 0..4 are expanded; their successors are round-tripped too.
    walk(Position::initial(), 5);
    EXPECT_GT(seen.size(), 70000u);
}

TEST(San, WellFormedGrammar)
{
    for (const char* ok : {"e4", "exd5", "Nf3", "Nbd2", "R1e2", "Qh4xe1", "O-O", "O-O-O+", "e8=Q#", "Kxf7+", "bxa1=N"})
        EXPECT_TRUE(is_well_formed_san(ok)) << ok;
    for (const char* bad : {"", "Zx9", "e9", "i4", "e4e5", "O-O-O-O", "e5=Q", "Px4", "N", "1.", "e4 ", "Nf3++", "K=Q"})
        EXPECT_FALSE(is_well_formed_san(bad)) << bad;
}

// Independent recursive edit distance for the oracle.
std::size_t edit_oracle(const std::string& a, const std::string& b)
{
    if (a.empty())
        return b.size();
    if (b.empty())
        return a.size();
    const std::size_t cost = a.back() == b.back() ? 0 : 1;
    const std::string a1 = a.substr(0, a.size() - 1), b1 = b.substr(0, b.size() - 1);
    return std::min({edit_oracle(a1, b) + 1, edit_oracle(a, b1) + 1, edit_oracle(a1, b1) + cost});
}

TEST(NearestLegal, LegalCandidateHasZeroDistance)
{
    const auto r = nearest_legal_distance(Position::initial(), "e4");
    EXPECT_EQ(r.distance, 0.0);
    EXPECT_EQ(r.closest_san, "e4");
}

TEST(NearestLegal, E5FromInitialMatchesBruteForce)
{
    const std::vector<std::string> sans = {"a3", "a4", "b3", "b4", "c3", "c4", "d3", "d4", "e3", "e4",
                                           "f3", "f4", "g3", "g4", "h3", "h4", "Na3", "Nc3", "Nf3", "Nh3"};
    double best = 2.0;
    std::string best_san;
    for (const auto& s : sans)
    {
        const double d = static_cast<double>(edit_oracle("e5", s)) / std::max<std::size_t>(2, s.size());
        if (d < best || (d == best && s < best_san))
        {
            best = d;
            best_san = s;
        }
    }
    ASSERT_EQ(best, 0.5);
    const auto r = nearest_legal_distance(Position::initial(), "e5");
    EXPECT_EQ(r.distance, best);
    EXPECT_EQ(r.closest_san, best_san);
}

TEST(NearestLegal, ErrorsOnMalformedAndTerminal)
{
    EXPECT_THROW(nearest_legal_distance(Position::initial(), "Zx9"), NotWellFormed);
    Position mated = Position::initial();
    for (const char* san : {"f3", "e5", "g4", "Qh4#"})
        mated = apply_san(mated, san);
    EXPECT_THROW(nearest_legal_distance(mated, "e4"), NoLegalMoves);
}

TEST(NearestLegal, PropertiesOnRandomPositions)
{
    std::mt19937 rng(7);
    const std::string alphabet = "abcdefgh12345678KQRBNx+#=O-";
    Position pos = Position::initial();
    for (int ply = 0; ply < 40; ++ply)
    {
        const auto moves = pos.legal_moves();
        if (moves.empty())
            break;
        for (const Move& m : moves)
            EXPECT_EQ(nearest_legal_distance(pos, to_san(pos, m)).distance, 0.0);
        for (int k = 0; k < 20; ++k)
        {
            std::string s;
            const int len = 2 + static_cast<int>(rng() % 5);
            for (int i = 0; i < len; ++i)
                s += alphabet[rng() % alphabet.size()];
            if (!is_well_formed_san(s))
                continue;
            const auto r = nearest_legal_distance(pos, s);
            EXPECT_GE(r.distance, 0.0);
            EXPECT_LE(r.distance, 1.0);
        }
        pos = pos.play(moves[rng() % moves.size()]);
    }
    EXPECT_EQ(levenshtein("kitten", "sitting"), levenshtein("sitting", "kitten"));
    EXPECT_EQ(levenshtein("kitten", "sitting"), 3u);
}

TEST(Pgn, ScholarsMate)
{
    const auto r = parse_pgn("[Result \"1-0\"] 1. e4 e5 2. Qh5 Nc6 3. Bc4 Nf6 4. Qxf7# 1-0");
    ASSERT_EQ(r.games.size(), 1u);
    EXPECT_TRUE(r.errors.empty());
    EXPECT_EQ(r.games[0].plies(), 7u);
    EXPECT_EQ(r.games[0].result, GameResult::WhiteWin);
    EXPECT_EQ(r.games[0].sans.back(), "Qxf7#");
}

TEST(Pgn, EmptyInput)
{
    const auto r = parse_pgn("");
    EXPECT_TRUE(r.games.empty());
    EXPECT_TRUE(r.errors.empty());
}

TEST(Pgn, MalformedGameIsReportedAndSkipped)
{
    const std::string text = "[Event \"bad\"]\n[Result \"*\"]\n\n1. e4 e5 2. Ke3 Nc6 *\n\n"
                             "[Event \"good\"]\n[Result \"1/2-1/2\"]\n\n1. d4 d5 2. c4 e6 1/2-1/2\n";
    const auto r = parse_pgn(text);
    ASSERT_EQ(r.games.size(), 1u);
    ASSERT_EQ(r.errors.size(), 1u);
    EXPECT_EQ(r.errors[0].game_index, 0u);
    EXPECT_EQ(r.games[0].tag("Event"), "good");
    EXPECT_EQ(r.games[0].result, GameResult::Draw);
}

TEST(Pgn, StripsCommentsVariationsNagsAndGlyphs)
{
    const std::string text = "[White \"Carlsen\"]\n[Black \"Nakamura\"]\n[Result \"0-1\"]\n"
                             "1. e4 {best by test} e5?! (1... c5 2. Nf3 (2. c3) d6) 2. Nf3 $1 Nc6!! ; eol comment\n"
                             "3.Bb5 a6 4. Ba4 0-0?? 0-1";
    const auto r = parse_pgn(text, "Nakamura");
    ASSERT_EQ(r.errors.size(), 1u); // 0-0 is illegal for Black here
    EXPECT_TRUE(r.games.empty());

    const auto ok = parse_pgn("[White \"Carlsen\"]\n[Black \"Nakamura\"]\n1. e4 {c} e5?! (1... c5) 2. Nf3 $1 Nc6!! "
                              "3.Bb5 a6 *",
                              "Nakamura");
    ASSERT_EQ(ok.games.size(), 1u);
    EXPECT_EQ(ok.games[0].target_color, Color::Black);
    EXPECT_EQ(movetext(ok.games[0]), "1. e4 e5 2. Nf3 Nc6 3. Bb5 a6");
}

TEST(Pgn, WriteThenParseRoundTrips)
{
    const auto r = parse_pgn("[Event \"x\"]\n1. e4 e5 2. Qh5 Nc6 3. Bc4 Nf6 4. Qxf7# 1-0");
    ASSERT_EQ(r.games.size(), 1u);
    const auto again = parse_pgn(write_pgn(r.games[0]));
    ASSERT_EQ(again.games.size(), 1u);
    EXPECT_EQ(again.games[0].moves, r.games[0].moves);
    EXPECT_EQ(again.games[0].result, GameResult::WhiteWin);
    EXPECT_EQ(write_pgn(again.games[0]), write_pgn(r.games[0]));
}

TEST(Pgn, InconsistentMateResultIsAnError)
{
    const auto r = parse_pgn("1. f3 e5 2. g4 Qh4# 1-0");
    EXPECT_TRUE(r.games.empty());
    EXPECT_EQ(r.errors.size(), 1u);
}

} // namespace
} // namespace mom::chess
