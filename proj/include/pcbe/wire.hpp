#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <vector>

namespace pcbe::wire {

static_assert(std::endian::native == std::endian::little,
              "wire formats are little-endian; big-endian hosts need byte swaps");

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    std::uint8_t b[4];
    std::memcpy(b, &v, 4);
    out.insert(out.end(), b, b + 4);
}

inline void put_f32(std::vector<std::uint8_t>& out, float v) {
    std::uint8_t b[4];
    std::memcpy(b, &v, 4);
    out.insert(out.end(), b, b + 4);
}

inline void put_f64(std::vector<std::uint8_t>& out, double v) {
    std::uint8_t b[8];
    std::memcpy(b, &v, 8);
    out.insert(out.end(), b, b + 8);
}

class Reader {
  public:
    explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

    std::uint32_t u32() {
        std::uint32_t v;
        take(&v, 4);
        return v;
    }
    float f32() {
        float v;
        take(&v, 4);
        return v;
    }
    double f64() {
        double v;
        take(&v, 8);
        return v;
    }
    std::size_t remaining() const { return data_.size() - pos_; }

  private:
    void take(void* dst, std::size_t n) {
        if (pos_ + n > data_.size()) throw std::runtime_error("wire: truncated payload");
        std::memcpy(dst, data_.data() + pos_, n);
        pos_ += n;
    }
    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
};

}  // namespace pcbe::wire
