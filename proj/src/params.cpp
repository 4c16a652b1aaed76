#include "mcfo/params.hpp"

#include "mcfo/errors.hpp"

namespace mcfo {

std::size_t ParamLayout::add(const std::string& name, std::size_t length) {
  if (has(name)) throw InvalidParameter("ParamLayout: duplicate slice " + name);
  slices_.push_back({name, size_, length});
  size_ += length;
  return slices_.back().offset;
}

const ParamSlice& ParamLayout::slice(const std::string& name) const {
  for (const auto& s : slices_)
    if (s.name == name) return s;
  throw InvalidParameter("ParamLayout: no slice named " + name);
}

bool ParamLayout::has(const std::string& name) const {
  for (const auto& s : slices_)
    if (s.name == name) return true;
  return false;
}

std::string ParamLayout::coordinate_name(std::size_t i) const {
  for (const auto& s : slices_) {
    if (i >= s.offset && i < s.offset + s.length) {
      if (s.length == 1) return s.name;
      return s.name + "[" + std::to_string(i - s.offset) + "]";
    }
  }
  throw InvalidParameter("ParamLayout: index out of range");
}

bool ParamLayout::operator==(const ParamLayout& o) const {
  if (size_ != o.size_ || slices_.size() != o.slices_.size()) return false;
  for (std::size_t i = 0; i < slices_.size(); ++i) {
    const auto& a = slices_[i];
    const auto& b = o.slices_[i];
    if (a.name != b.name || a.offset != b.offset || a.length != b.length) return false;
  }
  return true;
}

}  // namespace mcfo
