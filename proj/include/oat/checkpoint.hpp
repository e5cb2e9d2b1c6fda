#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "oat/array.hpp"
#include "oat/nn.hpp"

// Versioned weight container. Layout (little-endian):
//   magic "OATW" | u32 version | u64 array count | arrays | u64 blob count | blobs
//   array: u32 name_len | name | u32 rows | u32 cols | rows*cols f64
//   blob:  u32 name_len | name | u64 len | bytes
// Blobs carry non-tensor payloads (rng states, counters, config text) so a
// checkpoint round-trips bit-exactly through a single file.

namespace oat::ckpt {

struct Container {
    std::vector<std::pair<std::string, ad::Array>> arrays;
    std::map<std::string, std::string> blobs;

    void put_array(const std::string& name, const ad::Array& a) { arrays.emplace_back(name, a); }
    const ad::Array* find_array(const std::string& name) const;
    void put_blob(const std::string& name, std::string bytes) { blobs[name] = std::move(bytes); }
    const std::string* find_blob(const std::string& name) const;

    void put_store(const std::string& prefix, const nn::ParamStore& ps);
    void load_store(const std::string& prefix, nn::ParamStore& ps) const;
};

void save(const Container& c, const std::string& path);
Container load(const std::string& path);

}  // namespace oat::ckpt
