// SPDX-License-Identifier: Apache-2.0
#include "plot/causal.hpp"

#include <stdexcept>
#include <string>
#include <utility>

namespace plot {

namespace {

int forced_or(const DoMap &overrides, int var, int computed) {
  auto it = overrides.find(var);
  return it == overrides.end() ? computed : it->second;
}

void check_bit(int v) {
  if (v != 0 && v != 1)
    throw std::invalid_argument("adder input bits must be 0 or 1");
}

} // namespace

std::string_view HeqCausal::var_name(int var) {
  switch (var) {
  case kWX:
    return "z_WX";
  case kYZ:
    return "z_YZ";
  default:
    throw std::out_of_range("HeqCausal: unknown variable");
  }
}

int HeqCausal::var_index(std::string_view name) {
  for (int v = 0; v < kNumVars; ++v)
    if (var_name(v) == name)
      return v;
  throw std::invalid_argument("HeqCausal: unknown variable " + std::string(name));
}

void HeqCausal::validate(const Input &in) {
  for (int v : {in.w, in.x, in.y, in.z})
    if (v < kMinValue || v > kMaxValue)
      throw std::invalid_argument("HEQ input out of range [1,100]: " + std::to_string(v));
}

HeqState HeqCausal::forward(const Input &in, const DoMap &overrides) {
  validate(in);
  HeqState s;
  s.z_wx = forced_or(overrides, kWX, in.w == in.x ? 1 : 0);
  s.z_yz = forced_or(overrides, kYZ, in.y == in.z ? 1 : 0);
  s.y = s.z_wx == s.z_yz ? 1 : 0;
  return s;
}

int HeqCausal::variable(const State &s, int var) {
  switch (var) {
  case kWX:
    return s.z_wx;
  case kYZ:
    return s.z_yz;
  default:
    throw std::out_of_range("HeqCausal: unknown variable");
  }
}

int HeqCausal::swap(const Input &base, const Input &source, int var) {
  const int forced = variable(forward(source), var);
  return forward(base, {{var, forced}}).y;
}

bool HeqCausal::changes(const Input &base, const Input &source, int var) {
  return variable(forward(base), var) != variable(forward(source), var);
}

namespace {

std::pair<int, int> sample_pair(Rng &rng, int equal) {
  const int first = rng.uniform_int(HeqCausal::kMinValue, HeqCausal::kMaxValue);
  if (equal)
    return {first, first};
  // Uniform over the 99 other values.
  int second = rng.uniform_int(HeqCausal::kMinValue, HeqCausal::kMaxValue - 1);
  if (second >= first)
    ++second;
  return {first, second};
}

} // namespace

HeqInput sample_heq_input(Rng &rng, int z_wx, int z_yz) {
  const auto [w, x] = sample_pair(rng, z_wx);
  const auto [y, z] = sample_pair(rng, z_yz);
  return {w, x, y, z};
}

HeqInput sample_heq_input(Rng &rng) {
  const int z_wx = rng.bernoulli(0.5) ? 1 : 0;
  const int z_yz = rng.bernoulli(0.5) ? 1 : 0;
  return sample_heq_input(rng, z_wx, z_yz);
}

AdderInput AdderInput::from_ints(int a, int b) {
  if (a < 0 || a > 15 || b < 0 || b > 15)
    throw std::invalid_argument("adder operands must be 4-bit");
  AdderInput in;
  for (int i = 0; i < 4; ++i) {
    in.a[static_cast<std::size_t>(i)] = (a >> i) & 1;
    in.b[static_cast<std::size_t>(i)] = (b >> i) & 1;
  }
  return in;
}

int AdderInput::a_value() const {
  int v = 0;
  for (int i = 0; i < 4; ++i)
    v |= a[static_cast<std::size_t>(i)] << i;
  return v;
}

int AdderInput::b_value() const {
  int v = 0;
  for (int i = 0; i < 4; ++i)
    v |= b[static_cast<std::size_t>(i)] << i;
  return v;
}

int AdderState::output() const {
  return (carry[3] << 4) | (sum[3] << 3) | (sum[2] << 2) | (sum[1] << 1) | sum[0];
}

std::string_view AdderCausal::var_name(int var) {
  static constexpr std::array<std::string_view, 4> names{"C1", "C2", "C3", "C4"};
  if (var < 0 || var >= kNumVars)
    throw std::out_of_range("AdderCausal: unknown variable");
  return names[static_cast<std::size_t>(var)];
}

int AdderCausal::var_index(std::string_view name) {
  for (int v = 0; v < kNumVars; ++v)
    if (var_name(v) == name)
      return v;
  throw std::invalid_argument("AdderCausal: unknown variable " + std::string(name));
}

void AdderCausal::validate(const Input &in) {
  for (int v : in.a)
    check_bit(v);
  for (int v : in.b)
    check_bit(v);
}

AdderState AdderCausal::forward(const Input &in, const DoMap &overrides) {
  validate(in);
  AdderState s;
  int carry_in = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    const int total = in.a[i] + in.b[i] + carry_in;
    s.sum[i] = total % 2;
    s.carry[i] = forced_or(overrides, static_cast<int>(i), total / 2);
    carry_in = s.carry[i];
  }
  return s;
}

int AdderCausal::variable(const State &s, int var) {
  if (var < 0 || var >= kNumVars)
    throw std::out_of_range("AdderCausal: unknown variable");
  return s.carry[static_cast<std::size_t>(var)];
}

int AdderCausal::swap(const Input &base, const Input &source, int var) {
  const int forced = variable(forward(source), var);
  return forward(base, {{var, forced}}).output();
}

bool AdderCausal::changes(const Input &base, const Input &source, int var) {
  return variable(forward(base), var) != variable(forward(source), var);
}

std::array<int, 5> adder_label_bits(int label) {
  return {(label >> 4) & 1, (label >> 3) & 1, (label >> 2) & 1, (label >> 1) & 1, label & 1};
}

} // namespace plot
