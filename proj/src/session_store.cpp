#include "maat/errors.hpp"
#include "maat/service.hpp"

#include <sqlite3.h>

namespace maat {

void MemorySessionStore::put(const std::string& id, const nlohmann::json& doc, std::int64_t last_active) {
  std::lock_guard lock(mutex_);
  items_[id] = {doc, last_active};
}

std::optional<nlohmann::json> MemorySessionStore::get(const std::string& id) {
  std::lock_guard lock(mutex_);
  auto it = items_.find(id);
  if (it == items_.end()) return std::nullopt;
  return it->second.first;
}

void MemorySessionStore::erase(const std::string& id) {
  std::lock_guard lock(mutex_);
  items_.erase(id);
}

std::vector<std::pair<std::string, nlohmann::json>> MemorySessionStore::all() {
  std::lock_guard lock(mutex_);
  std::vector<std::pair<std::string, nlohmann::json>> out;
  for (const auto& [id, item] : items_) out.emplace_back(id, item.first);
  return out;
}

std::size_t MemorySessionStore::purge_before(std::int64_t cutoff) {
  std::lock_guard lock(mutex_);
  std::size_t n = 0;
  for (auto it = items_.begin(); it != items_.end();) {
    if (it->second.second < cutoff) {
      it = items_.erase(it);
      ++n;
    } else {
      ++it;
    }
  }
  return n;
}

struct SqliteSessionStore::Impl {
  sqlite3* db = nullptr;
  std::mutex mutex;

  void check(int rc, const char* what) const {
    if (rc != SQLITE_OK && rc != SQLITE_DONE && rc != SQLITE_ROW) {
      throw ValidationError(std::string(what) + ": " + sqlite3_errmsg(db));
    }
  }

  // Minimal RAII wrapper around a prepared statement.
  struct Stmt {
    sqlite3_stmt* s = nullptr;
    const Impl& owner;
    Stmt(const Impl& impl, const char* sql) : owner(impl) {
      owner.check(sqlite3_prepare_v2(owner.db, sql, -1, &s, nullptr), "prepare");
    }
    ~Stmt() { sqlite3_finalize(s); }
    void bind(int i, const std::string& v) {
      owner.check(sqlite3_bind_text(s, i, v.data(), int(v.size()), SQLITE_TRANSIENT), "bind");
    }
    void bind(int i, std::int64_t v) { owner.check(sqlite3_bind_int64(s, i, v), "bind"); }
    bool step() {
      const int rc = sqlite3_step(s);
      owner.check(rc, "step");
      return rc == SQLITE_ROW;
    }
    std::string text(int col) const {
      auto* p = reinterpret_cast<const char*>(sqlite3_column_text(s, col));
      return p ? std::string(p, std::size_t(sqlite3_column_bytes(s, col))) : std::string();
    }
  };
};

SqliteSessionStore::SqliteSessionStore(const std::filesystem::path& path) : impl_(std::make_unique<Impl>()) {
  if (sqlite3_open(path.string().c_str(), &impl_->db) != SQLITE_OK) {
    std::string msg = impl_->db ? sqlite3_errmsg(impl_->db) : "out of memory";
    sqlite3_close(impl_->db);
    throw ValidationError("cannot open session store " + path.string() + ": " + msg);
  }
  impl_->check(sqlite3_exec(impl_->db,
                            "CREATE TABLE IF NOT EXISTS sessions ("
                            " id TEXT PRIMARY KEY, doc TEXT NOT NULL, last_active INTEGER NOT NULL)",
                            nullptr, nullptr, nullptr),
               "create table");
}

SqliteSessionStore::~SqliteSessionStore() { sqlite3_close(impl_->db); }

void SqliteSessionStore::put(const std::string& id, const nlohmann::json& doc, std::int64_t last_active) {
  std::lock_guard lock(impl_->mutex);
  Impl::Stmt st(*impl_, "INSERT OR REPLACE INTO sessions(id, doc, last_active) VALUES (?1, ?2, ?3)");
  st.bind(1, id);
  st.bind(2, doc.dump());
  st.bind(3, last_active);
  st.step();
}

std::optional<nlohmann::json> SqliteSessionStore::get(const std::string& id) {
  std::lock_guard lock(impl_->mutex);
  Impl::Stmt st(*impl_, "SELECT doc FROM sessions WHERE id = ?1");
  st.bind(1, id);
  if (!st.step()) return std::nullopt;
  return nlohmann::json::parse(st.text(0));
}

void SqliteSessionStore::erase(const std::string& id) {
  std::lock_guard lock(impl_->mutex);
  Impl::Stmt st(*impl_, "DELETE FROM sessions WHERE id = ?1");
  st.bind(1, id);
  st.step();
}

std::vector<std::pair<std::string, nlohmann::json>> SqliteSessionStore::all() {
  std::lock_guard lock(impl_->mutex);
  Impl::Stmt st(*impl_, "SELECT id, doc FROM sessions ORDER BY id");
  std::vector<std::pair<std::string, nlohmann::json>> out;
  while (st.step()) out.emplace_back(st.text(0), nlohmann::json::parse(st.text(1)));
  return out;
}

std::size_t SqliteSessionStore::purge_before(std::int64_t cutoff) {
  std::lock_guard lock(impl_->mutex);
  Impl::Stmt st(*impl_, "DELETE FROM sessions WHERE last_active < ?1");
  st.bind(1, cutoff);
  st.step();
  return std::size_t(sqlite3_changes(impl_->db));
}

} // namespace maat
