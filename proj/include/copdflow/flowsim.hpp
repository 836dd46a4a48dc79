#pragma once

// Synthetic airway data: parametric Y-bifurcation geometries with optional
// branch narrowings, a D2Q9 BGK lattice-Boltzmann steady-state solver with
// half-way bounce-back walls, and rendering to 128x128 [-1,1] images.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "copdflow/tensor.hpp"

namespace copdflow {

enum class Site { left = 0, right = 1, both = 2 };

inline const char* to_string(Site s) {
    switch (s) {
        case Site::left: return "left";
        case Site::right: return "right";
        default: return "both";
    }
}
std::optional<Site> site_from_string(const std::string& s);

struct GeometryParams {
    Site label = Site::left;
    double severity_left = 0.0;   // fraction of branch width blocked; 0 = open
    double severity_right = 0.0;
    double position = 0.5;        // stenosis centre along branch arc, [0.2, 0.8]
    double angle_deg = 35.0;      // branch angle from vertical, [25, 50]
    double trachea_width = 36.0;  // cells, [28, 44]
    int side_left = 0;            // intrusion wall: 0 medial, 1 lateral
    int side_right = 0;
};

class AirwayGeometry {
public:
    static constexpr int kGrid = 256;

    GeometryParams params;
    std::vector<std::uint8_t> solid;  // kGrid*kGrid, 1 = solid

    bool is_solid(int x, int y) const { return solid[static_cast<std::size_t>(y) * kGrid + x] != 0; }

    /// Rasterizes the same analytic shape at resolution n (warm starts).
    std::vector<std::uint8_t> rasterize(int n) const;
};

/// Samples a labelled geometry; obstructed branches carry severity in
/// [0.3, 0.9], the rest of the parameters come from their documented ranges.
AirwayGeometry build_geometry(Site label, Rng& rng);

/// Deterministic construction from explicit parameters.
AirwayGeometry build_geometry_from_params(const GeometryParams& params);

/// Straight vertical channel spanning the full grid; used by solver checks.
AirwayGeometry make_straight_channel(int width_cells);

/// True when every bottom-edge opening is reachable from the top opening.
bool inlet_reaches_outlets(const AirwayGeometry& geom);

enum class InletProfile { parabolic, plug };

struct SimConfig {
    double tau = 1.0;             // relaxation time, (0.6, 1.5)
    double inlet_speed = 0.08;    // lattice units, <= 0.1
    int max_iters = 50000;
    double convergence_tol = 1e-6;  // relative L2 change per 100 iterations
    InletProfile profile = InletProfile::parabolic;
    bool warm_start = true;       // coarse-grid initial guess
};

struct FlowField {
    Tensor u, v, rho;  // [256, 256]; u = x-velocity, v = y-velocity (downward)
    bool converged = false;
    int iterations = 0;
};

FlowField solve_flow(const AirwayGeometry& geom, const SimConfig& cfg);

struct FluxReport {
    double inlet = 0;
    double outlet_left = 0;
    double outlet_right = 0;
};

/// Mass fluxes through the inlet row and the two outlet half-rows.
FluxReport measure_fluxes(const FlowField& field, const AirwayGeometry& geom);

/// Velocity magnitude, box-downsampled 2x to 128x128 and normalized to
/// [-1, 1] by the per-image maximum (solid cells map to -1).
Tensor render_image(const FlowField& field, const AirwayGeometry& geom);

}  // namespace copdflow
