#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mom::uci
{

class EngineTimeout : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

class ProtocolViolation : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

class EngineUnavailable : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// Newline-delimited duplex text channel to an engine.
class LineChannel
{
public:
    virtual ~LineChannel() = default;
    virtual void send(const std::string& line) = 0;
    /// Next line, or nullopt on timeout or end of stream.
    virtual std::optional<std::string> receive(std::chrono::milliseconds timeout) = 0;
    virtual bool alive() const = 0;
};

/// Child process speaking over its stdin/stdout.
class ProcessChannel : public LineChannel
{
public:
    /// Throws EngineUnavailable if the executable cannot be started.
    ProcessChannel(const std::string& path, const std::vector<std::string>& args = {});
    ~ProcessChannel() override;
    ProcessChannel(const ProcessChannel&) = delete;
    ProcessChannel& operator=(const ProcessChannel&) = delete;

    void send(const std::string& line) override;
    std::optional<std::string> receive(std::chrono::milliseconds timeout) override;
    bool alive() const override { return alive_; }

private:
    int pid_ = -1;
    int to_child_ = -1;
    int from_child_ = -1;
    bool alive_ = false;
    std::string buffer_;
};

/// Plays back a recorded transcript ("> sent" / "< received" lines). Every send must match the
/// next recorded command exactly, otherwise ProtocolViolation is thrown.
class ReplayChannel : public LineChannel
{
public:
    explicit ReplayChannel(std::vector<std::string> transcript);

    void send(const std::string& line) override;
    std::optional<std::string> receive(std::chrono::milliseconds timeout) override;
    bool alive() const override { return true; }
    bool finished() const { return next_ == transcript_.size(); }

private:
    std::vector<std::string> transcript_;
    std::size_t next_ = 0;
};

enum class SessionState
{
    Idle,
    Thinking
};

struct InfoLine
{
    int multipv = 1;
    int depth = 0;
    std::optional<int> cp;
    std::optional<int> mate; // moves to mate; negative when the side to move is mated
    std::vector<std::string> pv;
};

struct SearchResult
{
    std::string bestmove;
    std::vector<InfoLine> lines; // latest line per multipv index, ordered by index
};

/// Parses one "info ..." line; nullopt when it carries no score.
std::optional<InfoLine> parse_info(const std::string& line);

/// Client side of one engine connection. Not shareable between threads.
class UciSession
{
public:
    explicit UciSession(std::unique_ptr<LineChannel> channel,
                        std::chrono::milliseconds timeout = std::chrono::milliseconds(10000));
    ~UciSession();
    UciSession(const UciSession&) = delete;
    UciSession& operator=(const UciSession&) = delete;

    /// uci → uciok, then setoption for every requested option the engine advertises, then
    /// isready → readyok. Unrelated chatter is ignored.
    void handshake(const std::map<std::string, std::string>& options = {});
    bool advertises(const std::string& option) const;
    void set_option(const std::string& name, const std::string& value);
    void new_game();
    void sync();
    /// Sends `position` and `go`, collects info lines until bestmove.
    SearchResult search(const std::string& position_command, const std::string& go_command);
    void quit();

    SessionState state() const { return state_; }
    const std::vector<std::string>& transcript() const { return transcript_; }
    const std::map<std::string, std::string>& options() const { return options_; }

private:
    void send(const std::string& line);
    std::string receive_or_throw(const char* waiting_for);

    std::unique_ptr<LineChannel> channel_;
    std::chrono::milliseconds timeout_;
    SessionState state_ = SessionState::Idle;
    std::vector<std::string> advertised_;
    std::map<std::string, std::string> options_;
    std::vector<std::string> transcript_;
    bool ready_ = false;
};

/// "position startpos moves ..." for the given UCI move list, or a FEN-based command.
std::string position_command(const std::vector<std::string>& uci_moves, const std::string& fen = {});

} // namespace mom::uci
