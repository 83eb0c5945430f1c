#pragma once

// Exact Wigner 3j oracle: the Racah single-sum formula evaluated in rational
// arithmetic, followed by one square root at 50 significant digits.

#include <algorithm>
#include <cstdlib>

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <boost/multiprecision/cpp_int.hpp>

namespace zeitlin::oracle {

namespace mp = boost::multiprecision;

inline mp::cpp_int factorial(int k) {
  mp::cpp_int r = 1;
  for (int i = 2; i <= k; ++i) r *= i;
  return r;
}

/// Same doubled-argument convention as zeitlin::wigner3j.
inline double wigner3j_exact(int tj1, int tj2, int tj3, int tm1, int tm2, int tm3) {
  if (tm1 + tm2 + tm3 != 0) return 0.0;
  if (tj3 > tj1 + tj2 || tj3 < std::abs(tj1 - tj2)) return 0.0;
  if ((tj1 + tj2 + tj3) % 2 != 0) return 0.0;

  const int a = (tj1 + tj2 - tj3) / 2, b = (tj1 - tj2 + tj3) / 2, c = (-tj1 + tj2 + tj3) / 2;
  const int jsum1 = (tj1 + tj2 + tj3) / 2 + 1;
  const int j1pm1 = (tj1 + tm1) / 2, j1mm1 = (tj1 - tm1) / 2;
  const int j2pm2 = (tj2 + tm2) / 2, j2mm2 = (tj2 - tm2) / 2;
  const int j3pm3 = (tj3 + tm3) / 2, j3mm3 = (tj3 - tm3) / 2;
  const int u = (tj3 - tj2 + tm1) / 2, v = (tj3 - tj1 - tm2) / 2;

  mp::cpp_rational pref2(factorial(a) * factorial(b) * factorial(c), factorial(jsum1));
  pref2 *= factorial(j1pm1) * factorial(j1mm1) * factorial(j2pm2) * factorial(j2mm2) * factorial(j3pm3) *
           factorial(j3mm3);

  const int kmin = std::max({0, -u, -v});
  const int kmax = std::min({a, j1mm1, j2pm2});
  mp::cpp_rational sum = 0;
  for (int k = kmin; k <= kmax; ++k) {
    mp::cpp_int den = factorial(k) * factorial(u + k) * factorial(v + k) * factorial(a - k) *
                      factorial(j1mm1 - k) * factorial(j2pm2 - k);
    mp::cpp_rational t(1, den);
    if (k % 2 == 0)
      sum += t;
    else
      sum -= t;
  }
  using big = mp::cpp_bin_float_50;
  big value = mp::sqrt(big(pref2)) * big(sum);
  const int phase = (tj1 - tj2 - tm3) / 2;
  if (phase % 2 != 0) value = -value;
  return static_cast<double>(value);
}

}  // namespace zeitlin::oracle
