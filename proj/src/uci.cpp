#include "mom/uci.hpp"

#include <algorithm>
#include <cerrno>
#include <csignal>
#include <cstring>
#include <fcntl.h>
#include <poll.h>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

namespace mom::uci
{

// ---------------------------------------------------------------------------------------
// ProcessChannel

ProcessChannel::ProcessChannel(const std::string& path, const std::vector<std::string>& args)
{
    std::signal(SIGPIPE, SIG_IGN);
    int in_pipe[2], out_pipe[2], err_pipe[2];
    if (pipe(in_pipe) != 0 || pipe(out_pipe) != 0 || pipe(err_pipe) != 0)
        throw EngineUnavailable("pipe() failed");
    // err_pipe reports exec failure: it closes on successful exec.
    pid_ = fork();
    if (pid_ < 0)
        throw EngineUnavailable("fork() failed");
    if (pid_ == 0)
    {
        dup2(in_pipe[0], STDIN_FILENO);
        dup2(out_pipe[1], STDOUT_FILENO);
        close(in_pipe[0]);
        close(in_pipe[1]);
        close(out_pipe[0]);
        close(out_pipe[1]);
        close(err_pipe[0]);
        std::vector<char*> argv;
        argv.push_back(const_cast<char*>(path.c_str()));
        for (const auto& a : args)
            argv.push_back(const_cast<char*>(a.c_str()));
        argv.push_back(nullptr);
        ::fcntl(err_pipe[1], F_SETFD, FD_CLOEXEC);
        execv(path.c_str(), argv.data());
        const int e = errno;
        (void)!write(err_pipe[1], &e, sizeof e);
        _exit(127);
    }
    close(in_pipe[0]);
    close(out_pipe[1]);
    close(err_pipe[1]);
    to_child_ = in_pipe[1];
    from_child_ = out_pipe[0];
    int child_errno = 0;
    const ssize_t n = read(err_pipe[0], &child_errno, sizeof child_errno);
    close(err_pipe[0]);
    if (n > 0)
    {
        waitpid(pid_, nullptr, 0);
        close(to_child_);
        close(from_child_);
        throw EngineUnavailable("cannot execute " + path + ": " + std::strerror(child_errno));
    }
    alive_ = true;
}

ProcessChannel::~ProcessChannel()
{
    if (to_child_ >= 0)
        close(to_child_);
    if (from_child_ >= 0)
        close(from_child_);
    if (pid_ > 0)
    {
        // Closing stdin lets a well-behaved engine exit; give it a moment before killing.
        for (int i = 0; i < 50; ++i)
        {
            if (waitpid(pid_, nullptr, WNOHANG) == pid_)
                return;
            usleep(2000);
        }
        kill(pid_, SIGKILL);
        waitpid(pid_, nullptr, 0);
    }
}

void ProcessChannel::send(const std::string& line)
{
    if (!alive_)
        return;
    const std::string data = line + "\n";
    std::size_t off = 0;
    while (off < data.size())
    {
        const ssize_t n = write(to_child_, data.data() + off, data.size() - off);
        if (n < 0)
        {
            if (errno == EINTR)
                continue;
            alive_ = false;
            return;
        }
        off += static_cast<std::size_t>(n);
    }
}

std::optional<std::string> ProcessChannel::receive(std::chrono::milliseconds timeout)
{
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;)
    {
        const auto nl = buffer_.find('\n');
        if (nl != std::string::npos)
        {
            std::string line = buffer_.substr(0, nl);
            buffer_.erase(0, nl + 1);
            if (!line.empty() && line.back() == '\r')
                line.pop_back();
            return line;
        }
        if (from_child_ < 0)
            return std::nullopt;
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0)
            return std::nullopt;
        pollfd pfd{from_child_, POLLIN, 0};
        const int r = poll(&pfd, 1, static_cast<int>(left.count()));
        if (r < 0 && errno == EINTR)
            continue;
        if (r <= 0)
            return std::nullopt;
        char buf[4096];
        const ssize_t n = read(from_child_, buf, sizeof buf);
        if (n <= 0)
        {
            close(from_child_);
            from_child_ = -1;
            alive_ = false;
            continue; // drain any complete line still buffered
        }
        buffer_.append(buf, static_cast<std::size_t>(n));
    }
}

// ---------------------------------------------------------------------------------------
// ReplayChannel

ReplayChannel::ReplayChannel(std::vector<std::string> transcript) : transcript_(std::move(transcript))
{
    for (const auto& l : transcript_)
        if (!l.starts_with("> ") && !l.starts_with("< "))
            throw std::invalid_argument("transcript lines must start with '> ' or '< '");
}

void ReplayChannel::send(const std::string& line)
{
    if (next_ >= transcript_.size() || transcript_[next_] != "> " + line)
        throw ProtocolViolation("replay diverged at entry " + std::to_string(next_) + ": sent '" + line + "'");
    ++next_;
}

std::optional<std::string> ReplayChannel::receive(std::chrono::milliseconds)
{
    if (next_ >= transcript_.size() || !transcript_[next_].starts_with("< "))
        return std::nullopt;
    return transcript_[next_++].substr(2);
}

// ---------------------------------------------------------------------------------------
// UciSession

UciSession::UciSession(std::unique_ptr<LineChannel> channel, std::chrono::milliseconds timeout)
    : channel_(std::move(channel)), timeout_(timeout)
{
    if (!channel_)
        throw EngineUnavailable("no engine channel");
}

UciSession::~UciSession()
{
    try
    {
        if (channel_ && channel_->alive() && ready_)
            quit();
    }
    catch (...)
    {
    }
}

void UciSession::send(const std::string& line)
{
    if (state_ == SessionState::Thinking && line != "stop")
        throw ProtocolViolation("command '" + line + "' sent while the engine is thinking");
    transcript_.push_back("> " + line);
    channel_->send(line);
}

std::string UciSession::receive_or_throw(const char* waiting_for)
{
    auto line = channel_->receive(timeout_);
    if (!line)
        throw EngineTimeout(std::string("no response while waiting for ") + waiting_for);
    transcript_.push_back("< " + *line);
    return *line;
}

void UciSession::handshake(const std::map<std::string, std::string>& options)
{
    send("uci");
    for (;;)
    {
        const std::string line = receive_or_throw("uciok");
        if (line == "uciok")
            break;
        if (line.starts_with("option name "))
        {
            const auto end = line.find(" type ");
            advertised_.push_back(line.substr(12, end == std::string::npos ? std::string::npos : end - 12));
        }
    }
    for (const auto& [name, value] : options)
        if (advertises(name))
            set_option(name, value);
    sync();
    ready_ = true;
}

bool UciSession::advertises(const std::string& option) const
{
    return std::find(advertised_.begin(), advertised_.end(), option) != advertised_.end();
}

void UciSession::set_option(const std::string& name, const std::string& value)
{
    send("setoption name " + name + " value " + value);
    options_[name] = value;
}

void UciSession::sync()
{
    send("isready");
    while (receive_or_throw("readyok") != "readyok")
    {
    }
}

void UciSession::new_game()
{
    send("ucinewgame");
    sync();
}

std::optional<InfoLine> parse_info(const std::string& line)
{
    std::istringstream in(line);
    std::string tok;
    if (!(in >> tok) || tok != "info")
        return std::nullopt;
    InfoLine info;
    bool scored = false;
    while (in >> tok)
    {
        if (tok == "multipv")
            in >> info.multipv;
        else if (tok == "depth")
            in >> info.depth;
        else if (tok == "score")
        {
            std::string kind;
            int value = 0;
            in >> kind >> value;
            if (kind == "cp")
                info.cp = value;
            else if (kind == "mate")
                info.mate = value;
            scored = true;
        }
        else if (tok == "pv")
        {
            while (in >> tok)
                info.pv.push_back(tok);
        }
        else if (tok == "string")
            break;
    }
    if (!scored)
        return std::nullopt;
    return info;
}

SearchResult UciSession::search(const std::string& position_command, const std::string& go_command)
{
    if (!ready_)
        throw ProtocolViolation("search before handshake");
    send(position_command);
    send(go_command);
    state_ = SessionState::Thinking;
    std::map<int, InfoLine> lines;
    SearchResult result;
    for (;;)
    {
        auto line = channel_->receive(timeout_);
        if (!line)
        {
            // One chance to recover: ask the engine to stop and wait once more.
            send("stop");
            line = channel_->receive(timeout_);
            if (!line)
            {
                state_ = SessionState::Idle;
                throw EngineTimeout("no bestmove from engine");
            }
        }
        transcript_.push_back("< " + *line);
        if (line->starts_with("bestmove"))
        {
            std::istringstream in(*line);
            std::string word;
            in >> word >> result.bestmove;
            if (result.bestmove.empty())
                throw ProtocolViolation("bestmove without a move");
            break;
        }
        if (auto info = parse_info(*line))
            lines[info->multipv] = *info;
    }
    state_ = SessionState::Idle;
    for (auto& [_, l] : lines)
        result.lines.push_back(std::move(l));
    return result;
}

void UciSession::quit()
{
    if (state_ == SessionState::Thinking)
        return;
    send("quit");
    ready_ = false;
}

std::string position_command(const std::vector<std::string>& uci_moves, const std::string& fen)
{
    std::string cmd = fen.empty() ? "position startpos" : "position fen " + fen;
    if (!uci_moves.empty())
    {
        cmd += " moves";
        for (const auto& m : uci_moves)
            cmd += " " + m;
    }
    return cmd;
}

} // namespace mom::uci
