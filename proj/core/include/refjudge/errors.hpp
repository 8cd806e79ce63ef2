#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace refjudge {

// Base of every error the library throws. Per-item failures inside batches
// are reported as values instead (see backend.hpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class MalformedRecord : public Error {
 public:
  MalformedRecord(std::size_t line_no, const std::string& what)
      : Error("line " + std::to_string(line_no) + ": " + what), line_no_(line_no) {}
  std::size_t line_no() const { return line_no_; }

 private:
  std::size_t line_no_;
};

class DuplicateId : public Error {
 public:
  explicit DuplicateId(std::string id) : Error("duplicate id '" + id + "'"), id_(std::move(id)) {}
  const std::string& id() const { return id_; }

 private:
  std::string id_;
};

class DanglingReference : public Error {
 public:
  explicit DanglingReference(std::string id)
      : Error("reference set '" + id + "' matches no instance"), id_(std::move(id)) {}
  const std::string& instruction_id() const { return id_; }

 private:
  std::string id_;
};

class UnknownProtocol : public Error {
 public:
  explicit UnknownProtocol(const std::string& name) : Error("unknown protocol '" + name + "'") {}
};

class MissingSlot : public Error {
 public:
  explicit MissingSlot(std::string slot)
      : Error("missing value for template slot " + slot), slot_(std::move(slot)) {}
  const std::string& slot() const { return slot_; }

 private:
  std::string slot_;
};

class ScoreParseFailure : public Error {
 public:
  using Error::Error;
};

class CategoryParseFailure : public Error {
 public:
  using Error::Error;
};

class EmptyInput : public Error {
 public:
  using Error::Error;
};

class Misaligned : public Error {
 public:
  using Error::Error;
};

class NonFiniteInput : public Error {
 public:
  using Error::Error;
};

class PreconditionViolation : public Error {
 public:
  using Error::Error;
};

class PoolUnderfilled : public Error {
 public:
  PoolUnderfilled(std::size_t obtained, std::size_t requested)
      : Error("obtained " + std::to_string(obtained) + " of " + std::to_string(requested) +
              " samples"),
        obtained_(obtained) {}
  std::size_t obtained() const { return obtained_; }

 private:
  std::size_t obtained_;
};

// Retries used up on a transient failure. last_status is 0 when the last
// attempt never produced an HTTP status (connection error, timeout).
class BackendExhausted : public Error {
 public:
  BackendExhausted(int last_status, const std::string& what)
      : Error(what), last_status_(last_status) {}
  int last_status() const { return last_status_; }

 private:
  int last_status_;
};

class BackendRefused : public Error {
 public:
  BackendRefused(int status, const std::string& what) : Error(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

class MockMiss : public Error {
 public:
  explicit MockMiss(std::string key) : Error("mock has no answer for key " + key), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

}  // namespace refjudge
