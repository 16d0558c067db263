#pragma once

#include <functional>
#include <string>
#include <vector>

#include "zerowm/wm.hpp"

namespace zw {

// Durable registry of signature records. One directory per record (JSON
// manifest plus raw float32 blobs for C and Psi); index.json maps record_id
// to its entry. All mutations are write-temp-then-rename under a single
// writer lock, so readers never observe a half-written record.
class SignatureStore {
public:
    explicit SignatureStore(const std::string& root);

    const std::string& root() const { return root_; }

    // Returns the record id; throws ConflictError when the id exists.
    std::string put(const SignatureRecord& record);
    SignatureRecord get(const std::string& record_id) const;
    bool contains(const std::string& record_id) const;
    std::vector<std::string> ids() const;

    // Test seam: invoked after the record blobs are durable but before the
    // index is committed.
    std::function<void()> before_index_commit;

private:
    std::string root_;
};

}  // namespace zw
