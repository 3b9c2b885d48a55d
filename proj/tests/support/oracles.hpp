#pragma once

// Independent reference implementations. None of these call into the library
// routines they are used to check.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

namespace oracle {

using LMat = std::vector<std::vector<long double>>;

// ---------------------------------------------------------------------------
// Global/local consistency scores, written out term by term.

struct Glcs {
    double gcs;
    double lcs;
    double glcs;
    std::vector<double> g;
    std::vector<double> l;
};

inline double clip01(double v) {
    if (v < 0.0) return 0.0;
    if (v > 1.0) return 1.0;
    return v;
}

inline double expected_sim(double s0, double s1, double alpha, bool angle) {
    if (!angle) return (1.0 - alpha) * s0 + alpha * s1;
    const double a0 = std::acos(std::max(-1.0, std::min(1.0, s0)));
    const double a1 = std::acos(std::max(-1.0, std::min(1.0, s1)));
    return std::cos((1.0 - alpha) * a0 + alpha * a1);
}

inline Glcs glcs(const std::vector<double>& sa, const std::vector<double>& sb, double saa, double sab, double sba,
                 double sbb, double gamma, bool angle = true) {
    const int K = static_cast<int>(sa.size());
    Glcs r{};
    double gsum = 0.0;
    for (int k = 0; k < K; ++k) {
        const double alpha = (k + 1.0) / (K + 1.0);
        const double ea = expected_sim(saa, sab, alpha, angle);
        const double eb = expected_sim(sba, sbb, alpha, angle);
        const double g = clip01(1.0 - std::fabs(sa[k] - ea)) * clip01(1.0 - std::fabs(sb[k] - eb));
        r.g.push_back(g);
        gsum += std::pow(g, gamma);
    }
    r.gcs = gsum / K;
    if (K == 1) {
        r.l = {1.0};
        r.lcs = 1.0;
    } else {
        double lsum = 0.0;
        for (int k = 0; k < K; ++k) {
            double la, lb;
            if (k == 0) {
                la = sa[1];
                lb = sb[1];
            } else if (k == K - 1) {
                la = sa[K - 2];
                lb = sb[K - 2];
            } else {
                la = (sa[k - 1] + sa[k + 1]) / 2.0;
                lb = (sb[k - 1] + sb[k + 1]) / 2.0;
            }
            const double l = clip01(1.0 - std::fabs(sa[k] - la)) * clip01(1.0 - std::fabs(sb[k] - lb));
            r.l.push_back(l);
            lsum += l;
        }
        r.lcs = lsum / K;
    }
    r.glcs = std::sqrt(r.gcs * r.lcs);
    return r;
}

// ---------------------------------------------------------------------------
// Dense linear algebra in long double.

inline LMat identity(std::size_t n) {
    LMat m(n, std::vector<long double>(n, 0.0L));
    for (std::size_t i = 0; i < n; ++i) m[i][i] = 1.0L;
    return m;
}

inline LMat matmul(const LMat& a, const LMat& b) {
    const std::size_t n = a.size(), k = b.size(), m = b[0].size();
    LMat c(n, std::vector<long double>(m, 0.0L));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p)
            for (std::size_t j = 0; j < m; ++j) c[i][j] += a[i][p] * b[p][j];
    return c;
}

inline LMat inverse(LMat a) {
    const std::size_t n = a.size();
    LMat inv = identity(n);
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::fabs(a[r][col]) > std::fabs(a[piv][col])) piv = r;
        if (a[piv][col] == 0.0L) throw std::runtime_error("oracle: singular matrix");
        std::swap(a[piv], a[col]);
        std::swap(inv[piv], inv[col]);
        const long double d = a[col][col];
        for (std::size_t j = 0; j < n; ++j) {
            a[col][j] /= d;
            inv[col][j] /= d;
        }
        for (std::size_t r = 0; r < n; ++r) {
            if (r == col) continue;
            const long double f = a[r][col];
            for (std::size_t j = 0; j < n; ++j) {
                a[r][j] -= f * a[col][j];
                inv[r][j] -= f * inv[col][j];
            }
        }
    }
    return inv;
}

// Principal square root by the Denman-Beavers iteration; valid for matrices
// whose eigenvalues are real and positive (e.g. a product of two SPD matrices).
inline LMat sqrtm_denman_beavers(const LMat& a, int iterations = 100) {
    LMat y = a, z = identity(a.size());
    for (int it = 0; it < iterations; ++it) {
        const LMat yi = inverse(y), zi = inverse(z);
        LMat ny = y, nz = z;
        for (std::size_t i = 0; i < a.size(); ++i)
            for (std::size_t j = 0; j < a.size(); ++j) {
                ny[i][j] = 0.5L * (y[i][j] + zi[i][j]);
                nz[i][j] = 0.5L * (z[i][j] + yi[i][j]);
            }
        long double delta = 0.0L;
        for (std::size_t i = 0; i < a.size(); ++i)
            for (std::size_t j = 0; j < a.size(); ++j) delta = std::max(delta, std::fabs(ny[i][j] - y[i][j]));
        y = std::move(ny);
        z = std::move(nz);
        if (delta < 1e-18L) break;
    }
    return y;
}

// Cyclic Jacobi eigenvalues of a symmetric matrix.
inline std::vector<long double> jacobi_eigenvalues(LMat a, int sweeps = 100) {
    const std::size_t n = a.size();
    for (int s = 0; s < sweeps; ++s) {
        long double off = 0.0L;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) off += a[i][j] * a[i][j];
        if (off < 1e-40L) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                if (a[p][q] == 0.0L) continue;
                const long double theta = (a[q][q] - a[p][p]) / (2.0L * a[p][q]);
                const long double t = (theta >= 0 ? 1.0L : -1.0L) / (std::fabs(theta) + std::sqrt(theta * theta + 1.0L));
                const long double c = 1.0L / std::sqrt(t * t + 1.0L), sn = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const long double akp = a[k][p], akq = a[k][q];
                    a[k][p] = c * akp - sn * akq;
                    a[k][q] = sn * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const long double apk = a[p][k], aqk = a[q][k];
                    a[p][k] = c * apk - sn * aqk;
                    a[q][k] = sn * apk + c * aqk;
                }
            }
        }
    }
    std::vector<long double> ev(n);
    for (std::size_t i = 0; i < n; ++i) ev[i] = a[i][i];
    return ev;
}

struct Moments {
    std::vector<long double> mean;
    LMat cov;
};

inline Moments moments(const std::vector<std::vector<double>>& xs) {
    const std::size_t n = xs.size(), d = xs[0].size();
    Moments m{std::vector<long double>(d, 0.0L), LMat(d, std::vector<long double>(d, 0.0L))};
    for (const auto& x : xs)
        for (std::size_t i = 0; i < d; ++i) m.mean[i] += x[i];
    for (auto& v : m.mean) v /= n;
    if (n > 1) {
        for (const auto& x : xs)
            for (std::size_t i = 0; i < d; ++i)
                for (std::size_t j = 0; j < d; ++j) m.cov[i][j] += (x[i] - m.mean[i]) * (x[j] - m.mean[j]);
        for (auto& row : m.cov)
            for (auto& v : row) v /= (n - 1);
    }
    return m;
}

// Frechet distance with Tr((S1 S2)^1/2) from Denman-Beavers on the
// non-symmetric product.
inline double frechet_db(const std::vector<std::vector<double>>& x, const std::vector<std::vector<double>>& y) {
    const Moments a = moments(x), b = moments(y);
    const std::size_t d = a.mean.size();
    const LMat root = sqrtm_denman_beavers(matmul(a.cov, b.cov));
    long double r = 0.0L;
    for (std::size_t i = 0; i < d; ++i) {
        const long double dm = a.mean[i] - b.mean[i];
        r += dm * dm + a.cov[i][i] + b.cov[i][i] - 2.0L * root[i][i];
    }
    return static_cast<double>(r);
}

// Frechet distance with Tr((S1^1/2 S2 S1^1/2)^1/2) from Jacobi eigenvalues.
inline double frechet_jacobi(const std::vector<std::vector<double>>& x, const std::vector<std::vector<double>>& y) {
    const Moments a = moments(x), b = moments(y);
    const std::size_t d = a.mean.size();
    const LMat r1 = sqrtm_denman_beavers(a.cov);
    LMat inner = matmul(matmul(r1, b.cov), r1);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i + 1; j < d; ++j) inner[i][j] = inner[j][i] = 0.5L * (inner[i][j] + inner[j][i]);
    long double tr = 0.0L;
    for (long double ev : jacobi_eigenvalues(inner)) tr += std::sqrt(std::max(ev, 0.0L));
    long double r = -2.0L * tr;
    for (std::size_t i = 0; i < d; ++i) {
        const long double dm = a.mean[i] - b.mean[i];
        r += dm * dm + a.cov[i][i] + b.cov[i][i];
    }
    return static_cast<double>(r);
}

// ---------------------------------------------------------------------------
// Deterministic DDIM update and the timestep map.

inline long double ddim(long double x, long double eps, long double ab_from, long double ab_to) {
    return std::sqrt(ab_to) * (x - std::sqrt(1.0L - ab_from) * eps) / std::sqrt(ab_from) +
           std::sqrt(1.0L - ab_to) * eps;
}

inline int idm_index(int tau, int n_inv, int n_dng) {
    if (n_dng == 1) return 0;
    return static_cast<int>(std::round(static_cast<double>(tau) * (n_inv - 1) / (n_dng - 1)));
}

// ---------------------------------------------------------------------------
// Direct O(n^2) DFT of one channel, spectrum shifted so DC sits at (h/2, w/2);
// mean magnitudes of bins inside/outside the radius cutoff * 0.5.

struct Bands {
    double low;
    double high;
};

inline Bands naive_bands(const std::vector<std::vector<double>>& channels, std::size_t h, std::size_t w,
                         double cutoff) {
    const double pi = 3.14159265358979323846;
    double low = 0.0, high = 0.0;
    std::size_t nl = 0, nh = 0;
    for (const auto& ch : channels) {
        for (std::size_t cy = 0; cy < h; ++cy) {
            for (std::size_t cx = 0; cx < w; ++cx) {
                // shifted position -> signed frequency
                const long fy = static_cast<long>(cy) - static_cast<long>(h / 2);
                const long fx = static_cast<long>(cx) - static_cast<long>(w / 2);
                std::complex<double> acc = 0.0;
                for (std::size_t y = 0; y < h; ++y)
                    for (std::size_t x = 0; x < w; ++x) {
                        const double ph = -2.0 * pi * (static_cast<double>(fy * static_cast<long>(y)) / h +
                                                       static_cast<double>(fx * static_cast<long>(x)) / w);
                        acc += ch[y * w + x] * std::polar(1.0, ph);
                    }
                const double ry = static_cast<double>(fy) / h, rx = static_cast<double>(fx) / w;
                if (std::sqrt(ry * ry + rx * rx) < cutoff * 0.5) {
                    low += std::abs(acc);
                    ++nl;
                } else {
                    high += std::abs(acc);
                    ++nh;
                }
            }
        }
    }
    return {nl ? low / nl : 0.0, nh ? high / nh : 0.0};
}

}  // namespace oracle
