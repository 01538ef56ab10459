#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace solidify {

constexpr int kMaxDim = 6;
using Point = std::array<double, kMaxDim>;

Point make_point(std::initializer_list<double> xs);

struct Box {
    int d = 3;
    Point lo{};
    Point hi{};

    double volume() const;
    bool empty() const;
    bool contains(const Point& x) const; // closed
    bool contains(const Box& b) const;   // closed
    Box intersect(const Box& b) const;
    Box dilated(double delta) const;
    static Box cube(int d, const Point& center, double half_side);
};

// Volume of the intersection of two boxes (0 when disjoint).
double overlap_volume(const Box& a, const Box& b);

double sup_norm(int d, const Point& x);
double l1_norm(int d, const Point& x);
double euclid_norm(int d, const Point& x);

class DyadicIndicator;

// Nonempty, pairwise disjoint closed boxes whose union is a \ b.
std::vector<Box> box_difference(const Box& a, const Box& b);

// U0 as an exact union of dyadic cells, stored as a 2^d-tree over a dyadic
// root cube.  Leaves are empty (U1) or full (U0).  Points outside the support
// are in U1.
class DyadicIndicator {
  public:
    enum class Side { U0, U1 };
    enum State : std::uint8_t { kEmpty = 0, kFull = 1, kMixed = 2 };

    DyadicIndicator() = default;

    // U0 = (union of include) minus (union of exclude).  Corners must be
    // multiples of 2^-ell_max; the include boxes must lie in the support.
    static DyadicIndicator from_csg(int d, int ell_max, const Box& support,
                                    const std::vector<Box>& include,
                                    const std::vector<Box>& exclude = {},
                                    std::string name = {});

    // Preorder leaf codes (0 empty, 1 full, 2 mixed) over the root cube.
    static DyadicIndicator from_codes(int d, int ell_max, const Box& support,
                                      const std::vector<std::uint8_t>& codes,
                                      std::string name = {});

    int dimension() const { return d_; }
    int ell_max() const { return ell_max_; }
    const Box& support() const { return support_; }
    const std::string& name() const { return name_; }
    Box root_box() const;
    int root_level() const { return root_level_; }
    std::size_t node_count() const { return nodes_.size(); }
    int depth() const; // deepest level reached by a leaf, absolute

    double clip_volume(const Point& x, double r, Side side) const;
    double clip_volume(const Box& q, Side side) const;
    bool in_u0(const Point& x) const; // closed U0
    double u0_volume() const;

    // sup-distance from x to U1, capped at cap; exact up to bisection tol
    double sup_distance_to_u1(const Point& x, double cap, double tol) const;

    // Exact translate (by a vector of dyadic coordinates) and power-of-two scaling.
    DyadicIndicator translated(const Point& v) const;
    DyadicIndicator scaled_pow2(int k) const; // multiply coordinates by 2^k

    std::vector<std::uint8_t> codes() const;
    std::vector<Box> full_leaves() const;
    // full leaves meeting `region` with positive volume
    void visit_full_leaves(const Box& region, const std::function<void(const Box&)>& f) const;

    // Faces shared by a full and an empty leaf, as degenerate boxes.
    std::vector<Box> boundary_faces() const;

  private:
    struct Node {
        std::uint8_t state = kEmpty;
        std::uint32_t child = 0; // first of 2^d children when mixed
        double vol0 = 0.0;
    };

    double u0_in(std::uint32_t n, const Box& node, const Box& q) const;
    double u1_in(std::uint32_t n, const Box& node, const Box& q) const;
    bool point_in(std::uint32_t n, const Box& node, const Point& x) const;
    Box child_box(const Box& node, int c) const;
    void finish();
    void place_root();

    int d_ = 3;
    int ell_max_ = 0;
    int root_level_ = 0;
    Box support_;
    Point root_lo_{};
    std::string name_;
    std::vector<Node> nodes_;
};

// Compact set as a finite union of primitives.  A primitive is the
// Minkowski sum of an axis box [lo,hi] and a closed Euclidean ball of radius
// rho: rho = 0 is a box, lo = hi a ball.  Closed under sup-dilation.
struct Primitive {
    Point lo{};
    Point hi{};
    double rho = 0.0;
};

struct CompactSetSpec {
    int d = 3;
    std::vector<Primitive> parts;

    void add_box(const Box& b);
    void add_ball(const Point& c, double r);
    bool contains(const Point& x) const;
    double euclid_distance(const Point& x) const;
    double sup_extent() const; // max |y|_inf over y in the set
    bool inside_open_ball(double M) const { return sup_extent() < M; }
    Box bounding_box() const;
    bool all_boxes() const;
};

CompactSetSpec dilate(const CompactSetSpec& a, double delta);

// d-dimensional byte raster, cell (i_0..i_{d-1}) at origin + i*h.
struct Raster {
    int d = 3;
    std::array<int, kMaxDim> n{};
    Point origin{};
    double h = 1.0;
    std::vector<std::uint8_t> cells;

    Raster() = default;
    Raster(int d, std::array<int, kMaxDim> n, Point origin, double h);
    std::size_t size() const { return cells.size(); }
    std::size_t index(const std::array<int, kMaxDim>& i) const;
    std::array<int, kMaxDim> coords(std::size_t idx) const;
    Point center(std::size_t idx) const;
    std::size_t stride(int k) const;
};

// Flood fill (face adjacency) of the free cells connected to the raster
// frame.  Result: 1 where the cell is in the unbounded component.
Raster unbounded_complement_component(const Raster& blocked);

// Connected components of cells equal to `value`, face adjacency. Labels
// start at 1; other cells get 0.
std::vector<std::int32_t> label_components(const Raster& r, std::uint8_t value, int* count);

// Fixtures
struct CactusInfo {
    std::vector<int> levels;      // ell_k
    std::vector<double> x;        // x_k on the e1 axis
    std::vector<double> delta;    // delta_k = 8 * 2^-ell_k
};

CactusInfo cactus_info(int J, int L, int ell0);
DyadicIndicator cactus_pile(int d, int J, int L, int ell0);
DyadicIndicator crossing_order(int d, int L, int ell0);
DyadicIndicator shell(int d, double R, double thickness, int ell_max);
DyadicIndicator perforated_shell(int d, double R, double spacing, double hole, int ell_max);
// U0 = [-R,0] x [-R,R]^{d-1}: a half-space slab through the origin, truncated
DyadicIndicator slab(int d, int R_exp, int ell_max);
DyadicIndicator cube_domain(int d, double half_side, int ell_max);

class Stream;
// Random tree domain inside [0,1)^d-type root cube of side 2^-root_level.
DyadicIndicator random_domain(int d, int ell_max, Stream& rng, double p_full = 0.3,
                              double p_empty = 0.3);

// JSON domain format {d, ell_max, support, cells, encoding, name?}
nlohmann::json domain_to_json(const DyadicIndicator& u);
DyadicIndicator domain_from_json(const nlohmann::json& j);

std::string base64_encode(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);
std::vector<std::uint8_t> rle_encode(const std::vector<std::uint8_t>& codes);
std::vector<std::uint8_t> rle_decode(const std::vector<std::uint8_t>& bytes);

struct SchemaError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct InvariantError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace solidify
