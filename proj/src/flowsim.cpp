#include "copdflow/flowsim.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>

#include "copdflow/errors.hpp"

namespace copdflow {

std::optional<Site> site_from_string(const std::string& s) {
    if (s == "left") return Site::left;
    if (s == "right") return Site::right;
    if (s == "both") return Site::both;
    return std::nullopt;
}

// ===========================================================================
// Geometry
// ===========================================================================

namespace {

constexpr double kCenter = 128.0;   // mirror axis in continuous coordinates
constexpr double kSplitY = 80.0;    // bifurcation depth
constexpr double kBranchWidthRatio = 0.78;

struct Vec2 {
    double x, y;
};

// Canonical down-right branch centerline as a sampled quadratic Bezier with
// cumulative arc length. The left branch evaluates this on mirrored x.
struct BranchShape {
    std::vector<Vec2> pts;
    std::vector<double> arc;  // arc length at pts[i]
    double total = 0;
    double halfwidth = 0;

    static BranchShape make(double angle_deg, double trachea_width) {
        BranchShape b;
        b.halfwidth = kBranchWidthRatio * trachea_width / 2.0;
        const double th = angle_deg * 3.14159265358979323846 / 180.0;
        const Vec2 p0{kCenter, kSplitY};
        const Vec2 p1{kCenter + 55.0 * std::sin(th), kSplitY + 55.0 * std::cos(th)};
        const double spread = 40.0 + 50.0 * (angle_deg - 25.0) / 25.0;
        const Vec2 p2{kCenter + spread, 260.0};
        const int m = 64;
        b.pts.resize(m + 1);
        b.arc.resize(m + 1);
        for (int i = 0; i <= m; ++i) {
            const double t = double(i) / m;
            const double a = (1 - t) * (1 - t), c = 2 * t * (1 - t), d = t * t;
            b.pts[i] = {a * p0.x + c * p1.x + d * p2.x, a * p0.y + c * p1.y + d * p2.y};
            if (i > 0) {
                const double dx = b.pts[i].x - b.pts[i - 1].x;
                const double dy = b.pts[i].y - b.pts[i - 1].y;
                b.arc[i] = b.arc[i - 1] + std::sqrt(dx * dx + dy * dy);
            }
        }
        b.total = b.arc[m];
        return b;
    }

    // Nearest-point distance, arc position and signed lateral offset.
    void project(double px, double py, double& dist, double& s, double& lateral) const {
        double best_d2 = 1e30;
        double best_s = 0, best_lat = 0;
        for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
            const double ax = pts[i].x, ay = pts[i].y;
            const double bx = pts[i + 1].x, by = pts[i + 1].y;
            const double ux = bx - ax, uy = by - ay;
            const double len2 = ux * ux + uy * uy;
            double t = ((px - ax) * ux + (py - ay) * uy) / len2;
            t = std::min(1.0, std::max(0.0, t));
            const double qx = ax + t * ux, qy = ay + t * uy;
            const double dx = px - qx, dy = py - qy;
            const double d2 = dx * dx + dy * dy;
            if (d2 < best_d2) {
                best_d2 = d2;
                best_s = arc[i] + t * (arc[i + 1] - arc[i]);
                const double inv = 1.0 / std::sqrt(len2);
                best_lat = (ux * dy - uy * dx) * inv;
            }
        }
        dist = std::sqrt(best_d2);
        s = best_s;
        lateral = best_lat;
    }

    // One-sided cosine-squared narrowing centred at `position` of the arc.
    bool contains(double px, double py, double severity, int side, double position) const {
        if (py < kSplitY - halfwidth - 2.0) return false;
        double dist, s, lat;
        project(px, py, dist, s, lat);
        if (dist > halfwidth) return false;
        if (severity <= 0.0) return true;
        const double s0 = position * total;
        const double win = 2.0 * halfwidth;  // half-length of the bump
        const double ds = s - s0;
        if (std::abs(ds) >= win) return true;
        const double c = std::cos(3.14159265358979323846 * ds / (2.0 * win));
        const double depth = severity * 2.0 * halfwidth * c * c;
        // side 0 intrudes from the positive-lateral wall, side 1 from the other
        if (side == 0) return lat > -halfwidth + depth ? lat <= halfwidth && lat >= -halfwidth + depth : false;
        return lat <= halfwidth - depth && lat >= -halfwidth;
    }
};

struct AirwayShape {
    GeometryParams p;
    BranchShape branch;  // canonical down-right

    explicit AirwayShape(const GeometryParams& params)
        : p(params), branch(BranchShape::make(params.angle_deg, params.trachea_width)) {}

    bool fluid(double px, double py) const {
        // trachea: vertical capsule ending at the bifurcation
        if (py <= kSplitY + p.trachea_width / 2.0 && std::abs(px - kCenter) <= p.trachea_width / 2.0) {
            if (py <= kSplitY) return true;
        }
        if (branch.contains(px, py, p.severity_right, p.side_right, p.position)) return true;
        if (branch.contains(2.0 * kCenter - px, py, p.severity_left, p.side_left, p.position))
            return true;
        return false;
    }
};

}  // namespace

std::vector<std::uint8_t> AirwayGeometry::rasterize(int n) const {
    AirwayShape shape(params);
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(n) * n, 1);
    const double scale = double(kGrid) / n;
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            const double px = (x + 0.5) * scale;
            const double py = (y + 0.5) * scale;
            if (shape.fluid(px, py)) mask[static_cast<std::size_t>(y) * n + x] = 0;
        }
    return mask;
}

AirwayGeometry build_geometry_from_params(const GeometryParams& params) {
    AirwayGeometry geom;
    geom.params = params;
    geom.solid = geom.rasterize(AirwayGeometry::kGrid);
    if (!inlet_reaches_outlets(geom))
        throw ContractError("generated geometry violates connectivity");
    return geom;
}

AirwayGeometry build_geometry(Site label, Rng& rng) {
    GeometryParams p;
    p.label = label;
    p.angle_deg = 25.0 + 25.0 * rng.uniform();
    p.trachea_width = 28.0 + 16.0 * rng.uniform();
    p.position = 0.2 + 0.6 * rng.uniform();
    if (label == Site::left || label == Site::both) {
        p.severity_left = 0.3 + 0.6 * rng.uniform();
        p.side_left = static_cast<int>(rng.bounded(2));
    }
    if (label == Site::right || label == Site::both) {
        p.severity_right = 0.3 + 0.6 * rng.uniform();
        p.side_right = static_cast<int>(rng.bounded(2));
    }
    return build_geometry_from_params(p);
}

AirwayGeometry make_straight_channel(int width_cells) {
    AirwayGeometry geom;
    geom.params.label = Site::both;
    geom.params.trachea_width = width_cells;
    const int n = AirwayGeometry::kGrid;
    geom.solid.assign(static_cast<std::size_t>(n) * n, 1);
    const int x0 = (n - width_cells) / 2;
    for (int y = 0; y < n; ++y)
        for (int x = x0; x < x0 + width_cells; ++x)
            geom.solid[static_cast<std::size_t>(y) * n + x] = 0;
    return geom;
}

bool inlet_reaches_outlets(const AirwayGeometry& geom) {
    const int n = AirwayGeometry::kGrid;
    std::vector<std::uint8_t> seen(static_cast<std::size_t>(n) * n, 0);
    std::deque<int> queue;
    for (int x = 0; x < n; ++x)
        if (!geom.is_solid(x, 0)) {
            seen[x] = 1;
            queue.push_back(x);
        }
    if (queue.empty()) return false;
    while (!queue.empty()) {
        const int idx = queue.front();
        queue.pop_front();
        const int x = idx % n, y = idx / n;
        const int nb[4][2] = {{x + 1, y}, {x - 1, y}, {x, y + 1}, {x, y - 1}};
        for (auto& [bx, by] : nb) {
            if (bx < 0 || bx >= n || by < 0 || by >= n) continue;
            const int bidx = by * n + bx;
            if (seen[bidx] || geom.is_solid(bx, by)) continue;
            seen[bidx] = 1;
            queue.push_back(bidx);
        }
    }
    bool left_open = false, right_open = false;
    for (int x = 0; x < n; ++x) {
        if (geom.is_solid(x, n - 1)) continue;
        if (!seen[(n - 1) * n + x]) return false;  // unreachable outlet cell
        (x < n / 2 ? left_open : right_open) = true;
    }
    return left_open && right_open;
}

// ===========================================================================
// D2Q9 BGK solver, pull scheme with fused collision.
// Directions: 0 rest; 1 +x; 2 +y; 3 -x; 4 -y; 5 ++; 6 -+; 7 --; 8 +-.
// y grows downward; the inlet drives +y flow from the top edge.
// ===========================================================================

namespace {

constexpr int EX[9] = {0, 1, 0, -1, 0, 1, -1, -1, 1};
constexpr int EY[9] = {0, 0, 1, 0, -1, 1, 1, -1, -1};
constexpr int OPP[9] = {0, 3, 4, 1, 2, 7, 8, 5, 6};
constexpr double WQ[9] = {4.0 / 9, 1.0 / 9, 1.0 / 9, 1.0 / 9, 1.0 / 9,
                          1.0 / 36, 1.0 / 36, 1.0 / 36, 1.0 / 36};

enum CellType : std::uint8_t { FLUID = 0, SOLID = 1, INLET = 2, OUTLET = 3 };

struct Solver {
    int n;
    double omega;
    std::vector<std::uint8_t> type;
    std::array<std::vector<float>, 9> f, fnew;
    std::vector<float> ux, uy, rho;
    std::vector<float> inlet_v;             // per-inlet-cell target speed
    std::vector<int> slow_cells;            // wall-adjacent fluid cells
    struct Span {
        int start, len;
    };
    std::vector<Span> fast_spans;           // interior runs, all sources fluid-readable
    std::vector<int> inlet_cells, outlet_cells;

    Solver(const std::vector<std::uint8_t>& mask, int n_, const SimConfig& cfg) : n(n_) {
        omega = 1.0 / cfg.tau;
        const std::size_t sz = static_cast<std::size_t>(n) * n;
        type.assign(sz, SOLID);
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) {
                const std::size_t i = static_cast<std::size_t>(y) * n + x;
                if (mask[i]) continue;
                if (y == 0) type[i] = INLET;
                else if (y == n - 1) type[i] = OUTLET;
                else type[i] = FLUID;
            }
        for (auto& plane : f) plane.assign(sz, 0.f);
        for (auto& plane : fnew) plane.assign(sz, 0.f);
        ux.assign(sz, 0.f);
        uy.assign(sz, 0.f);
        rho.assign(sz, 1.f);

        // inlet profile over the top opening
        int x_lo = n, x_hi = -1;
        for (int x = 0; x < n; ++x)
            if (type[x] == INLET) {
                x_lo = std::min(x_lo, x);
                x_hi = std::max(x_hi, x);
            }
        inlet_v.assign(sz, 0.f);
        for (int x = x_lo; x >= 0 && x <= x_hi; ++x) {
            if (type[x] != INLET) continue;
            double v = cfg.inlet_speed;
            if (cfg.profile == InletProfile::parabolic) {
                const double cx = (x_lo + x_hi + 1) / 2.0;
                const double half = (x_hi - x_lo + 1) / 2.0;
                const double r = ((x + 0.5) - cx) / half;
                v = cfg.inlet_speed * std::max(0.0, 1.0 - r * r);
            }
            inlet_v[x] = static_cast<float>(v);
            inlet_cells.push_back(x);
        }
        for (int x = 0; x < n; ++x)
            if (type[(n - 1) * n + x] == OUTLET) outlet_cells.push_back((n - 1) * n + x);

        // classify fluid cells into vectorizable interior spans vs slow cells
        for (int y = 1; y < n - 1; ++y) {
            int run_start = -1;
            for (int x = 0; x < n; ++x) {
                const int idx = y * n + x;
                bool fast = type[idx] == FLUID && x >= 1 && x <= n - 2;
                if (fast) {
                    for (int i = 1; i < 9 && fast; ++i) {
                        const int s = idx - EY[i] * n - EX[i];
                        fast = type[s] != SOLID;
                    }
                }
                if (fast) {
                    if (run_start < 0) run_start = idx;
                } else {
                    if (run_start >= 0) {
                        fast_spans.push_back({run_start, idx - run_start});
                        run_start = -1;
                    }
                    if (type[idx] == FLUID) slow_cells.push_back(idx);
                }
            }
            if (run_start >= 0) fast_spans.push_back({run_start, y * n + n - run_start});
        }
    }

    void init_equilibrium() {
        const std::size_t sz = type.size();
        for (std::size_t c = 0; c < sz; ++c) {
            set_feq(c, rho[c], ux[c], uy[c], f);
            set_feq(c, rho[c], ux[c], uy[c], fnew);
        }
    }

    void set_feq(std::size_t c, double r, double vx, double vy,
                 std::array<std::vector<float>, 9>& dst) {
        const double u2 = vx * vx + vy * vy;
        for (int i = 0; i < 9; ++i) {
            const double cu = EX[i] * vx + EY[i] * vy;
            dst[i][c] = static_cast<float>(WQ[i] * r * (1.0 + 3.0 * cu + 4.5 * cu * cu - 1.5 * u2));
        }
    }

    template <bool StoreMacros>
    void step(double ramp) {
        // interior fast spans: straight-line pulls, no type checks
        for (const Span& sp : fast_spans) {
            const int base = sp.start;
            float* __restrict out0 = fnew[0].data() + base;
            const float* __restrict in0 = f[0].data() + base;
            float* __restrict uxp = ux.data() + base;
            float* __restrict uyp = uy.data() + base;
            float* __restrict rp = rho.data() + base;
            const float* __restrict in1 = f[1].data() + base - 1;
            const float* __restrict in2 = f[2].data() + base - n;
            const float* __restrict in3 = f[3].data() + base + 1;
            const float* __restrict in4 = f[4].data() + base + n;
            const float* __restrict in5 = f[5].data() + base - n - 1;
            const float* __restrict in6 = f[6].data() + base - n + 1;
            const float* __restrict in7 = f[7].data() + base + n + 1;
            const float* __restrict in8 = f[8].data() + base + n - 1;
            float* __restrict o1 = fnew[1].data() + base;
            float* __restrict o2 = fnew[2].data() + base;
            float* __restrict o3 = fnew[3].data() + base;
            float* __restrict o4 = fnew[4].data() + base;
            float* __restrict o5 = fnew[5].data() + base;
            float* __restrict o6 = fnew[6].data() + base;
            float* __restrict o7 = fnew[7].data() + base;
            float* __restrict o8 = fnew[8].data() + base;
            const float om = static_cast<float>(omega);
            for (int k = 0; k < sp.len; ++k) {
                const float v0 = in0[k], v1 = in1[k], v2 = in2[k], v3 = in3[k], v4 = in4[k];
                const float v5 = in5[k], v6 = in6[k], v7 = in7[k], v8 = in8[k];
                const float r = v0 + v1 + v2 + v3 + v4 + v5 + v6 + v7 + v8;
                const float inv = 1.0f / r;
                const float vx = (v1 - v3 + v5 - v6 - v7 + v8) * inv;
                const float vy = (v2 - v4 + v5 + v6 - v7 - v8) * inv;
                const float u2 = vx * vx + vy * vy;
                const float c0 = 1.0f - 1.5f * u2;
                const float w1r = (1.0f / 9.0f) * r, w5r = (1.0f / 36.0f) * r;
                out0[k] = v0 + om * ((4.0f / 9.0f) * r * c0 - v0);
                o1[k] = v1 + om * (w1r * (c0 + 3.0f * vx + 4.5f * vx * vx) - v1);
                o3[k] = v3 + om * (w1r * (c0 - 3.0f * vx + 4.5f * vx * vx) - v3);
                o2[k] = v2 + om * (w1r * (c0 + 3.0f * vy + 4.5f * vy * vy) - v2);
                o4[k] = v4 + om * (w1r * (c0 - 3.0f * vy + 4.5f * vy * vy) - v4);
                const float a = vx + vy, b = vx - vy;
                o5[k] = v5 + om * (w5r * (c0 + 3.0f * a + 4.5f * a * a) - v5);
                o7[k] = v7 + om * (w5r * (c0 - 3.0f * a + 4.5f * a * a) - v7);
                o8[k] = v8 + om * (w5r * (c0 + 3.0f * b + 4.5f * b * b) - v8);
                o6[k] = v6 + om * (w5r * (c0 - 3.0f * b + 4.5f * b * b) - v6);
                if constexpr (StoreMacros) {
                    uxp[k] = vx;
                    uyp[k] = vy;
                    rp[k] = r;
                }
            }
        }

        // wall-adjacent cells: per-direction bounce-back checks
        for (int idx : slow_cells) {
            const int x = idx % n;
            float vals[9];
            for (int i = 0; i < 9; ++i) {
                const int sx = x - EX[i];
                const int s = idx - EY[i] * n - EX[i];
                if (sx < 0 || sx >= n || type[s] == SOLID)
                    vals[i] = f[OPP[i]][idx];
                else
                    vals[i] = f[i][s];
            }
            double r = 0, vx = 0, vy = 0;
            for (int i = 0; i < 9; ++i) r += vals[i];
            vx = (vals[1] - vals[3] + vals[5] - vals[6] - vals[7] + vals[8]) / r;
            vy = (vals[2] - vals[4] + vals[5] + vals[6] - vals[7] - vals[8]) / r;
            const double u2 = vx * vx + vy * vy;
            for (int i = 0; i < 9; ++i) {
                const double cu = EX[i] * vx + EY[i] * vy;
                const double feq = WQ[i] * r * (1.0 + 3.0 * cu + 4.5 * cu * cu - 1.5 * u2);
                fnew[i][idx] = static_cast<float>(vals[i] + omega * (feq - vals[i]));
            }
            if constexpr (StoreMacros) {
                ux[idx] = static_cast<float>(vx);
                uy[idx] = static_cast<float>(vy);
                rho[idx] = static_cast<float>(r);
            }
        }

        // inlet: imposed equilibrium at the ramped target profile
        for (int c : inlet_cells) {
            set_feq(static_cast<std::size_t>(c), 1.0, 0.0, ramp * inlet_v[c], fnew);
            if constexpr (StoreMacros) {
                ux[c] = 0.f;
                uy[c] = static_cast<float>(ramp * inlet_v[c]);
                rho[c] = 1.f;
            }
        }
        // outlet: zero-gradient copy from the row above
        for (int c : outlet_cells) {
            const int above = c - n;
            if (type[above] == SOLID) {
                set_feq(static_cast<std::size_t>(c), 1.0, 0.0, 0.0, fnew);
            } else {
                for (int i = 0; i < 9; ++i) fnew[i][c] = fnew[i][above];
            }
            if constexpr (StoreMacros) {
                ux[c] = ux[above];
                uy[c] = uy[above];
                rho[c] = rho[above];
            }
        }
        f.swap(fnew);
    }

    /// Runs to steady state; returns (converged, iterations).
    std::pair<bool, int> run(int max_iters, double tol, int ramp_iters) {
        std::vector<float> prev_ux(ux), prev_uy(uy);
        int it = 0;
        bool converged = false;
        const int check_every = 100;
        while (it < max_iters) {
            for (int k = 0; k < check_every - 1 && it < max_iters - 1; ++k, ++it) {
                const double ramp = ramp_iters > 0 ? std::min(1.0, double(it) / ramp_iters) : 1.0;
                step<false>(ramp);
            }
            const double ramp = ramp_iters > 0 ? std::min(1.0, double(it) / ramp_iters) : 1.0;
            step<true>(ramp);
            ++it;
            double num = 0, den = 0;
            for (std::size_t c = 0; c < type.size(); ++c) {
                if (type[c] == SOLID) continue;
                const double du = double(ux[c]) - prev_ux[c];
                const double dv = double(uy[c]) - prev_uy[c];
                num += du * du + dv * dv;
                den += double(ux[c]) * ux[c] + double(uy[c]) * uy[c];
            }
            if (!std::isfinite(num) || !std::isfinite(den)) return {false, it};
            prev_ux = ux;
            prev_uy = uy;
            if (it > ramp_iters && den > 0 && std::sqrt(num / den) < tol) {
                converged = true;
                break;
            }
        }
        // final macroscopic pass for boundary rows
        step<true>(1.0);
        ++it;
        return {converged, it};
    }
};

}  // namespace

FlowField solve_flow(const AirwayGeometry& geom, const SimConfig& cfg) {
    if (!(cfg.tau > 0.6 && cfg.tau < 1.5)) throw ConfigError("tau must lie in (0.6, 1.5)");
    if (cfg.inlet_speed > 0.1 || cfg.inlet_speed <= 0)
        throw ConfigError("inlet_speed must lie in (0, 0.1]");

    const int n = AirwayGeometry::kGrid;
    Solver fine(geom.solid, n, cfg);

    if (cfg.warm_start) {
        const int cn = n / 2;
        Solver coarse(geom.rasterize(cn), cn, cfg);
        coarse.init_equilibrium();
        coarse.run(std::min(cfg.max_iters, 6000), std::max(cfg.convergence_tol * 10, 1e-5), 400);
        // bilinear upsample of (ux, uy, rho) as the fine initial state
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) {
                const std::size_t idx = static_cast<std::size_t>(y) * n + x;
                if (fine.type[idx] == SOLID) continue;
                const double gx = std::min(double(cn) - 1.001, std::max(0.0, (x + 0.5) / 2.0 - 0.5));
                const double gy = std::min(double(cn) - 1.001, std::max(0.0, (y + 0.5) / 2.0 - 0.5));
                const int x0 = static_cast<int>(gx), y0 = static_cast<int>(gy);
                const double fx = gx - x0, fy = gy - y0;
                double vx = 0, vy = 0, r = 0;
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx) {
                        const std::size_t c = static_cast<std::size_t>(y0 + dy) * cn + (x0 + dx);
                        const double w = (dx ? fx : 1 - fx) * (dy ? fy : 1 - fy);
                        if (coarse.type[c] == SOLID) {
                            r += w;  // rho 1, velocity 0 at walls
                        } else {
                            vx += w * coarse.ux[c];
                            vy += w * coarse.uy[c];
                            r += w * coarse.rho[c];
                        }
                    }
                fine.ux[idx] = static_cast<float>(vx);
                fine.uy[idx] = static_cast<float>(vy);
                fine.rho[idx] = static_cast<float>(r);
            }
        fine.init_equilibrium();
        auto [conv, iters] = fine.run(cfg.max_iters, cfg.convergence_tol, 0);
        FlowField out;
        out.converged = conv;
        out.iterations = iters;
        out.u = Tensor({n, n});
        out.v = Tensor({n, n});
        out.rho = Tensor::full({n, n}, real(1));
        for (std::size_t c = 0; c < fine.type.size(); ++c) {
            if (fine.type[c] == SOLID) continue;
            out.u.data[c] = static_cast<real>(fine.ux[c]);
            out.v.data[c] = static_cast<real>(fine.uy[c]);
            out.rho.data[c] = static_cast<real>(fine.rho[c]);
        }
        return out;
    }

    fine.init_equilibrium();
    auto [conv, iters] = fine.run(cfg.max_iters, cfg.convergence_tol, 800);
    FlowField out;
    out.converged = conv;
    out.iterations = iters;
    out.u = Tensor({n, n});
    out.v = Tensor({n, n});
    out.rho = Tensor::full({n, n}, real(1));
    for (std::size_t c = 0; c < fine.type.size(); ++c) {
        if (fine.type[c] == SOLID) continue;
        out.u.data[c] = static_cast<real>(fine.ux[c]);
        out.v.data[c] = static_cast<real>(fine.uy[c]);
        out.rho.data[c] = static_cast<real>(fine.rho[c]);
    }
    return out;
}

FluxReport measure_fluxes(const FlowField& field, const AirwayGeometry& geom) {
    const int n = AirwayGeometry::kGrid;
    FluxReport rep;
    for (int x = 0; x < n; ++x) {
        if (!geom.is_solid(x, 1))
            rep.inlet += double(field.rho.at({1, x})) * double(field.v.at({1, x}));
        if (!geom.is_solid(x, n - 2)) {
            const double q = double(field.rho.at({n - 2, x})) * double(field.v.at({n - 2, x}));
            (x < n / 2 ? rep.outlet_left : rep.outlet_right) += q;
        }
    }
    return rep;
}

Tensor render_image(const FlowField& field, const AirwayGeometry& geom) {
    const int n = AirwayGeometry::kGrid;
    const int m = n / 2;
    Tensor img({m, m});
    double maxmag = 0;
    for (int y = 0; y < m; ++y)
        for (int x = 0; x < m; ++x) {
            double acc = 0;
            for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx) {
                    const double u = field.u.at({2 * y + dy, 2 * x + dx});
                    const double v = field.v.at({2 * y + dy, 2 * x + dx});
                    acc += std::sqrt(u * u + v * v);
                }
            acc /= 4.0;
            img.at({y, x}) = static_cast<real>(acc);
            maxmag = std::max(maxmag, acc);
        }
    (void)geom;
    if (maxmag <= 0.0) throw DegenerateSampleError("all-zero velocity field");
    for (auto& p : img.data) p = static_cast<real>(2.0 * (double(p) / maxmag) - 1.0);
    return img;
}

}  // namespace copdflow
