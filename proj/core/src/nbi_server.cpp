#include <sys/socket.h>
#include <sys/un.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <system_error>

#include "cghf/nbi.hpp"

namespace cghf::nbi {

namespace {

sockaddr_un make_address(const std::string& path) {
    sockaddr_un addr{};
    addr.sun_family = AF_UNIX;
    if (path.size() >= sizeof(addr.sun_path)) throw std::system_error(ENAMETOOLONG, std::generic_category(), path);
    std::memcpy(addr.sun_path, path.c_str(), path.size() + 1);
    return addr;
}

bool write_all(int fd, std::string_view data) {
    while (!data.empty()) {
        auto n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            return false;
        }
        data.remove_prefix(static_cast<std::size_t>(n));
    }
    return true;
}

}  // namespace

Server::Server(ExposureService& service, std::string socket_path) : service_(&service), path_(std::move(socket_path)) {}

Server::~Server() {
    stop();
    for (auto& t : sessions_)
        if (t.joinable()) t.join();
    ::unlink(path_.c_str());
}

void Server::start() {
    auto addr = make_address(path_);
    listen_fd_ = ::socket(AF_UNIX, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw std::system_error(errno, std::generic_category(), "socket");
    ::unlink(path_.c_str());
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0)
        throw std::system_error(errno, std::generic_category(), "bind " + path_);
    if (::listen(listen_fd_, 16) < 0) throw std::system_error(errno, std::generic_category(), "listen");
}

void Server::run() {
    int lfd;
    {
        std::lock_guard lk(mu_);
        lfd = listen_fd_;
    }
    while (lfd >= 0) {
        int fd = ::accept(lfd, nullptr, nullptr);
        std::lock_guard lk(mu_);
        if (stopping_) {
            if (fd >= 0) ::close(fd);
            return;
        }
        if (fd < 0) {
            if (errno == EINTR) continue;
            return;
        }
        clients_.push_back(fd);
        sessions_.emplace_back([this, fd] { session(fd); });
    }
}

void Server::stop() {
    std::lock_guard lk(mu_);
    if (stopping_) return;
    stopping_ = true;
    if (listen_fd_ >= 0) {
        ::shutdown(listen_fd_, SHUT_RDWR);
        ::close(listen_fd_);
        listen_fd_ = -1;
    }
    for (int fd : clients_) ::shutdown(fd, SHUT_RDWR);
}

void Server::session(int fd) {
    std::string buffer;
    char chunk[4096];
    while (true) {
        auto n = ::recv(fd, chunk, sizeof chunk, 0);
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) break;
        buffer.append(chunk, static_cast<std::size_t>(n));
        std::size_t pos;
        bool ok = true;
        while (ok && (pos = buffer.find('\n')) != std::string::npos) {
            auto line = buffer.substr(0, pos);
            buffer.erase(0, pos + 1);
            if (line.empty()) continue;
            ok = write_all(fd, service_->handle_line(line) + "\n");
        }
        if (!ok) break;
    }
    std::lock_guard lk(mu_);
    clients_.erase(std::remove(clients_.begin(), clients_.end(), fd), clients_.end());
    ::close(fd);
}

json request_over_socket(const std::string& socket_path, const json& request) {
    auto addr = make_address(socket_path);
    int fd = ::socket(AF_UNIX, SOCK_STREAM, 0);
    if (fd < 0) throw std::system_error(errno, std::generic_category(), "socket");
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) {
        int err = errno;
        ::close(fd);
        throw std::system_error(err, std::generic_category(), "connect " + socket_path);
    }
    std::string response;
    if (write_all(fd, request.dump() + "\n")) {
        char chunk[4096];
        while (response.find('\n') == std::string::npos) {
            auto n = ::recv(fd, chunk, sizeof chunk, 0);
            if (n < 0 && errno == EINTR) continue;
            if (n <= 0) break;
            response.append(chunk, static_cast<std::size_t>(n));
        }
    }
    ::close(fd);
    auto end = response.find('\n');
    if (end == std::string::npos) throw std::runtime_error("no response from " + socket_path);
    return json::parse(response.substr(0, end));
}

}  // namespace cghf::nbi
