#include "mpqkd/siftmap.hpp"

#include <cmath>
#include <stdexcept>

namespace mpqkd {

namespace {

PairClass party_class(IntensityClass first, IntensityClass second) {
  const int mu = (first == IntensityClass::Signal) +
                 (second == IntensityClass::Signal);
  const int nu = (first == IntensityClass::Decoy) +
                 (second == IntensityClass::Decoy);
  if (mu == 1 && nu == 0) return PairClass::MuO;
  if (nu == 2) return PairClass::NuNu;
  if (nu == 1 && mu == 0) return PairClass::NuO;
  if (mu == 0 && nu == 0) return PairClass::OO;
  return PairClass::Invalid;  // {mu,mu} or {mu,nu}
}

}  // namespace

BasisClass assign_basis(const PairRecord& pair) {
  BasisClass c;
  c.a = party_class(pair.tag_j.intensity_a, pair.tag_k.intensity_a);
  c.b = party_class(pair.tag_j.intensity_b, pair.tag_k.intensity_b);
  return c;
}

ZBits map_z_bits(const PairRecord& pair) {
  if (!assign_basis(pair).is_z())
    throw std::logic_error("map_z_bits: pair is not Z basis");
  ZBits z;
  z.bit_a = pair.tag_j.intensity_a == IntensityClass::Signal ? 0 : 1;
  z.bit_b = pair.tag_j.intensity_b == IntensityClass::Signal ? 1 : 0;
  z.is_error = z.bit_a != z.bit_b;
  return z;
}

SiftResult sift_x_pair(const PairRecord& pair, double delta_f_hz,
                       double clock_hz, std::uint32_t m_slices) {
  if (!assign_basis(pair).is_x())
    throw std::logic_error("sift_x_pair: pair is not X basis");
  const double delta_a = wrap_two_pi(pair.tag_j.phase_a - pair.tag_k.phase_a);
  const double delta_b = wrap_two_pi(pair.tag_j.phase_b - pair.tag_k.phase_b);
  const double corr = kTwoPi / clock_hz * delta_f_hz *
                      static_cast<double>(pair.k - pair.j);
  const double delta = wrap_two_pi(delta_a - delta_b + corr);

  const double half_slice = kTwoPi / (2.0 * m_slices);  // pi / M
  const double dist0 = std::min(delta, kTwoPi - delta);
  const double dist_pi = std::abs(delta - kTwoPi / 2.0);

  SiftResult r;
  if (dist0 <= half_slice) {
    r.kept = true;
    r.is_error = pair.det_j.clicked_l == pair.det_k.clicked_r;
  } else if (dist_pi <= half_slice) {
    r.kept = true;
    r.is_error = pair.det_j.clicked_l == pair.det_k.clicked_l;
  }
  return r;
}

void add_pair_to_tallies(TallyTable& t, const PairRecord& pair,
                         double delta_f_hz, double clock_hz,
                         std::uint32_t m_slices) {
  const BasisClass c = assign_basis(pair);
  if (c.a == PairClass::Invalid || c.b == PairClass::Invalid) return;
  switch (c.a) {
    case PairClass::MuO:
      if (c.b == PairClass::MuO) {
        ++t.n_mu_mu;
        if (map_z_bits(pair).is_error) ++t.m_z;
      } else if (c.b == PairClass::OO) {
        ++t.n_mu_o;
      }
      return;
    case PairClass::NuO:
      if (c.b == PairClass::NuO)
        ++t.n_nu_nu;
      else if (c.b == PairClass::OO)
        ++t.n_nu_o;
      return;
    case PairClass::NuNu:
      if (c.b == PairClass::NuNu) {
        const SiftResult s = sift_x_pair(pair, delta_f_hz, clock_hz, m_slices);
        if (s.kept) {
          ++t.n_2nu_2nu;
          if (s.is_error) ++t.m_x;
        }
      } else if (c.b == PairClass::OO) {
        ++t.n_2nu_o;
      }
      return;
    case PairClass::OO:
      switch (c.b) {
        case PairClass::MuO: ++t.n_o_mu; break;
        case PairClass::NuO: ++t.n_o_nu; break;
        case PairClass::NuNu: ++t.n_o_2nu; break;
        case PairClass::OO: ++t.n_o_o; break;
        default: break;
      }
      return;
    default:
      return;
  }
}

TallyTable accumulate_tallies(std::span<const PairRecord> pairs,
                              std::span<const double> delta_f_per_pair,
                              double clock_hz, std::uint32_t m_slices) {
  if (pairs.size() != delta_f_per_pair.size())
    throw std::invalid_argument("accumulate_tallies: length mismatch");
  TallyTable t;
  for (std::size_t i = 0; i < pairs.size(); ++i)
    add_pair_to_tallies(t, pairs[i], delta_f_per_pair[i], clock_hz, m_slices);
  return t;
}

TallyTable accumulate_tallies(std::span<const PairRecord> pairs,
                              double delta_f_hz, double clock_hz,
                              std::uint32_t m_slices) {
  TallyTable t;
  for (const auto& p : pairs)
    add_pair_to_tallies(t, p, delta_f_hz, clock_hz, m_slices);
  return t;
}

}  // namespace mpqkd
