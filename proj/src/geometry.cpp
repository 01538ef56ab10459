#include "solidify/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>

#include "solidify/rng.hpp"

namespace solidify {

Point make_point(std::initializer_list<double> xs)
{
    Point p{};
    int i = 0;
    for (double v : xs) {
        if (i >= kMaxDim) throw std::invalid_argument("make_point: too many coordinates");
        p[i++] = v;
    }
    return p;
}

double Box::volume() const
{
    double v = 1.0;
    for (int i = 0; i < d; ++i) {
        double len = hi[i] - lo[i];
        if (len <= 0) return 0.0;
        v *= len;
    }
    return v;
}

bool Box::empty() const
{
    for (int i = 0; i < d; ++i)
        if (hi[i] < lo[i]) return true;
    return false;
}

bool Box::contains(const Point& x) const
{
    for (int i = 0; i < d; ++i)
        if (x[i] < lo[i] || x[i] > hi[i]) return false;
    return true;
}

bool Box::contains(const Box& b) const
{
    for (int i = 0; i < d; ++i)
        if (b.lo[i] < lo[i] || b.hi[i] > hi[i]) return false;
    return true;
}

Box Box::intersect(const Box& b) const
{
    Box r{d, {}, {}};
    for (int i = 0; i < d; ++i) {
        r.lo[i] = std::max(lo[i], b.lo[i]);
        r.hi[i] = std::min(hi[i], b.hi[i]);
    }
    return r;
}

Box Box::dilated(double delta) const
{
    Box r = *this;
    for (int i = 0; i < d; ++i) {
        r.lo[i] -= delta;
        r.hi[i] += delta;
    }
    return r;
}

Box Box::cube(int d, const Point& center, double half_side)
{
    Box b{d, {}, {}};
    for (int i = 0; i < d; ++i) {
        b.lo[i] = center[i] - half_side;
        b.hi[i] = center[i] + half_side;
    }
    return b;
}

double overlap_volume(const Box& a, const Box& b)
{
    double v = 1.0;
    for (int i = 0; i < a.d; ++i) {
        double len = std::min(a.hi[i], b.hi[i]) - std::max(a.lo[i], b.lo[i]);
        if (len <= 0) return 0.0;
        v *= len;
    }
    return v;
}

double sup_norm(int d, const Point& x)
{
    double m = 0;
    for (int i = 0; i < d; ++i) m = std::max(m, std::abs(x[i]));
    return m;
}

double l1_norm(int d, const Point& x)
{
    double s = 0;
    for (int i = 0; i < d; ++i) s += std::abs(x[i]);
    return s;
}

double euclid_norm(int d, const Point& x)
{
    double s = 0;
    for (int i = 0; i < d; ++i) s += x[i] * x[i];
    return std::sqrt(s);
}

std::vector<Box> box_difference(const Box& a, const Box& b)
{
    std::vector<Box> out;
    if (overlap_volume(a, b) <= 0) {
        if (a.volume() > 0) out.push_back(a);
        return out;
    }
    Box cur = a;
    for (int i = 0; i < a.d; ++i) {
        if (cur.lo[i] < b.lo[i]) {
            Box piece = cur;
            piece.hi[i] = b.lo[i];
            if (piece.volume() > 0) out.push_back(piece);
            cur.lo[i] = b.lo[i];
        }
        if (cur.hi[i] > b.hi[i]) {
            Box piece = cur;
            piece.lo[i] = b.hi[i];
            if (piece.volume() > 0) out.push_back(piece);
            cur.hi[i] = b.hi[i];
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// DyadicIndicator

namespace {

bool on_grid(double v, int ell)
{
    double s = std::ldexp(v, ell);
    return std::isfinite(s) && s == std::floor(s);
}

} // namespace

Box DyadicIndicator::root_box() const
{
    Box b{d_, root_lo_, root_lo_};
    double side = std::ldexp(1.0, -root_level_);
    for (int i = 0; i < d_; ++i) b.hi[i] = root_lo_[i] + side;
    return b;
}

// Root cube: lower corner at the support corner, side the smallest power of
// two covering the support.  Cells at level ell_max then sit on the grid.
void DyadicIndicator::place_root()
{
    double extent = 0;
    for (int i = 0; i < d_; ++i) extent = std::max(extent, support_.hi[i] - support_.lo[i]);
    if (!(extent > 0) || !std::isfinite(extent)) throw std::invalid_argument("support box is empty");
    int k = ell_max_;
    while (std::ldexp(1.0, -k) < extent) --k;
    root_level_ = k;
    root_lo_ = support_.lo;
}

Box DyadicIndicator::child_box(const Box& node, int c) const
{
    Box b = node;
    for (int i = 0; i < d_; ++i) {
        double half = 0.5 * (node.hi[i] - node.lo[i]);
        if ((c >> i) & 1) {
            b.lo[i] = node.lo[i] + half;
        } else {
            b.hi[i] = node.lo[i] + half;
        }
    }
    return b;
}

DyadicIndicator DyadicIndicator::from_csg(int d, int ell_max, const Box& support,
                                          const std::vector<Box>& include,
                                          const std::vector<Box>& exclude, std::string name)
{
    if (d < 3 || d > kMaxDim) throw std::invalid_argument("dimension must be in [3,6]");
    if (ell_max < -60 || ell_max > 1000) throw std::invalid_argument("ell_max out of range");
    DyadicIndicator u;
    u.d_ = d;
    u.ell_max_ = ell_max;
    u.support_ = support;
    u.support_.d = d;
    u.name_ = std::move(name);

    auto check_box = [&](const Box& b, const char* what) {
        for (int i = 0; i < d; ++i) {
            if (!on_grid(b.lo[i], ell_max) || !on_grid(b.hi[i], ell_max))
                throw std::invalid_argument(std::string(what) +
                                            " corner is not resolvable at ell_max");
        }
    };
    check_box(u.support_, "support");
    for (const auto& b : include) {
        check_box(b, "include box");
        if (!u.support_.contains(b)) throw std::invalid_argument("include box leaves the support");
    }
    for (const auto& b : exclude) {
        for (int i = 0; i < d; ++i) {
            // exclude boxes may run off to infinity; only finite corners are checked
            if (std::isfinite(b.lo[i]) && !on_grid(b.lo[i], ell_max))
                throw std::invalid_argument("exclude box corner is not resolvable at ell_max");
            if (std::isfinite(b.hi[i]) && !on_grid(b.hi[i], ell_max))
                throw std::invalid_argument("exclude box corner is not resolvable at ell_max");
        }
    }

    u.place_root();
    const int k = u.root_level_;

    u.nodes_.emplace_back();
    const int nchild = 1 << d;

    std::function<void(std::uint32_t, const Box&, int, const std::vector<int>&,
                       const std::vector<int>&)>
        build = [&](std::uint32_t n, const Box& node, int level, const std::vector<int>& inc,
                    const std::vector<int>& exc) {
            std::vector<int> inc2, exc2;
            for (int i : inc)
                if (overlap_volume(include[i], node) > 0) inc2.push_back(i);
            for (int i : exc)
                if (overlap_volume(exclude[i], node) > 0) exc2.push_back(i);
            for (int i : exc2)
                if (exclude[i].contains(node)) {
                    u.nodes_[n].state = kEmpty;
                    return;
                }
            if (inc2.empty()) {
                u.nodes_[n].state = kEmpty;
                return;
            }
            if (exc2.empty()) {
                for (int i : inc2)
                    if (include[i].contains(node)) {
                        u.nodes_[n].state = kFull;
                        return;
                    }
            }
            if (level >= ell_max) {
                // corners are on the grid, so any positive overlap covers the cell
                u.nodes_[n].state = exc2.empty() ? kFull : kEmpty;
                return;
            }
            std::uint32_t first = static_cast<std::uint32_t>(u.nodes_.size());
            u.nodes_.resize(u.nodes_.size() + nchild);
            u.nodes_[n].state = kMixed;
            u.nodes_[n].child = first;
            for (int c = 0; c < nchild; ++c)
                build(first + c, u.child_box(node, c), level + 1, inc2, exc2);
            std::uint8_t s0 = u.nodes_[first].state;
            bool uniform = s0 != kMixed;
            for (int c = 1; c < nchild && uniform; ++c)
                if (u.nodes_[first + c].state != s0) uniform = false;
            if (uniform) {
                u.nodes_[n].state = s0;
                u.nodes_[n].child = 0;
                u.nodes_.resize(first);
            }
        };
    std::vector<int> inc(include.size()), exc(exclude.size());
    for (std::size_t i = 0; i < include.size(); ++i) inc[i] = static_cast<int>(i);
    for (std::size_t i = 0; i < exclude.size(); ++i) exc[i] = static_cast<int>(i);
    build(0, u.root_box(), k, inc, exc);
    u.finish();
    return u;
}

DyadicIndicator DyadicIndicator::from_codes(int d, int ell_max, const Box& support,
                                            const std::vector<std::uint8_t>& codes,
                                            std::string name)
{
    if (d < 3 || d > kMaxDim) throw SchemaError("dimension must be in [3,6]");
    DyadicIndicator u;
    u.d_ = d;
    u.ell_max_ = ell_max;
    u.support_ = support;
    u.support_.d = d;
    u.name_ = std::move(name);
    for (int i = 0; i < d; ++i)
        if (!on_grid(support.lo[i], ell_max) || !on_grid(support.hi[i], ell_max))
            throw SchemaError("support corner is not resolvable at ell_max");
    u.place_root();
    u.nodes_.emplace_back();
    const int nchild = 1 << d;
    std::size_t pos = 0;
    std::function<void(std::uint32_t, int)> parse = [&](std::uint32_t n, int level) {
        if (pos >= codes.size()) throw SchemaError("cells: truncated tree code stream");
        std::uint8_t c = codes[pos++];
        if (c > kMixed) throw SchemaError("cells: invalid tree code");
        u.nodes_[n].state = c;
        if (c != kMixed) return;
        if (level >= ell_max) throw SchemaError("cells: tree deeper than ell_max");
        std::uint32_t first = static_cast<std::uint32_t>(u.nodes_.size());
        u.nodes_[n].child = first;
        u.nodes_.resize(u.nodes_.size() + nchild);
        for (int k = 0; k < nchild; ++k) parse(first + k, level + 1);
    };
    parse(0, u.root_level_);
    if (pos != codes.size()) throw SchemaError("cells: trailing tree codes");
    u.finish();
    // full leaves must stay inside the support
    for (const auto& b : u.full_leaves())
        if (!u.support_.contains(b)) throw SchemaError("cells: U0 leaves the support box");
    return u;
}

void DyadicIndicator::finish()
{
    // bottom-up U0 volumes; children always follow their parent in storage
    Box root = root_box();
    std::function<double(std::uint32_t, const Box&)> vol = [&](std::uint32_t n, const Box& b) {
        Node& node = nodes_[n];
        if (node.state == kFull)
            node.vol0 = b.volume();
        else if (node.state == kEmpty)
            node.vol0 = 0.0;
        else {
            double s = 0;
            for (int c = 0; c < (1 << d_); ++c) s += vol(node.child + c, child_box(b, c));
            node.vol0 = s;
        }
        return node.vol0;
    };
    vol(0, root);
    if (nodes_[0].vol0 <= 0) throw std::invalid_argument("U0 must be nonempty");
}

int DyadicIndicator::depth() const
{
    int best = root_level_;
    std::function<void(std::uint32_t, int)> walk = [&](std::uint32_t n, int level) {
        best = std::max(best, level);
        if (nodes_[n].state == kMixed)
            for (int c = 0; c < (1 << d_); ++c) walk(nodes_[n].child + c, level + 1);
    };
    walk(0, root_level_);
    return best;
}

double DyadicIndicator::u0_in(std::uint32_t n, const Box& node, const Box& q) const
{
    const Node& nd = nodes_[n];
    if (nd.state == kEmpty) return 0.0;
    double ov = overlap_volume(node, q);
    if (ov <= 0) return 0.0;
    if (nd.state == kFull) return ov;
    if (q.contains(node)) return nd.vol0;
    double s = 0;
    for (int c = 0; c < (1 << d_); ++c) s += u0_in(nd.child + c, child_box(node, c), q);
    return s;
}

double DyadicIndicator::u1_in(std::uint32_t n, const Box& node, const Box& q) const
{
    const Node& nd = nodes_[n];
    if (nd.state == kFull) return 0.0;
    double ov = overlap_volume(node, q);
    if (ov <= 0) return 0.0;
    if (nd.state == kEmpty) return ov;
    if (q.contains(node)) return node.volume() - nd.vol0;
    double s = 0;
    for (int c = 0; c < (1 << d_); ++c) s += u1_in(nd.child + c, child_box(node, c), q);
    return s;
}

double DyadicIndicator::clip_volume(const Box& q, Side side) const
{
    Box root = root_box();
    if (side == Side::U0) return u0_in(0, root, q);
    double outside = q.volume() - overlap_volume(q, root);
    return outside + u1_in(0, root, q);
}

double DyadicIndicator::clip_volume(const Point& x, double r, Side side) const
{
    if (!(r > 0)) throw std::invalid_argument("clip_volume: r must be positive");
    return clip_volume(Box::cube(d_, x, r), side);
}

bool DyadicIndicator::point_in(std::uint32_t n, const Box& node, const Point& x) const
{
    const Node& nd = nodes_[n];
    if (nd.state == kEmpty || !node.contains(x)) return false;
    if (nd.state == kFull) return true;
    for (int c = 0; c < (1 << d_); ++c)
        if (point_in(nd.child + c, child_box(node, c), x)) return true;
    return false;
}

bool DyadicIndicator::in_u0(const Point& x) const { return point_in(0, root_box(), x); }

double DyadicIndicator::u0_volume() const { return nodes_.empty() ? 0.0 : nodes_[0].vol0; }

double DyadicIndicator::sup_distance_to_u1(const Point& x, double cap, double tol) const
{
    auto u1 = [&](double r) { return clip_volume(Box::cube(d_, x, r), Side::U1); };
    if (u1(cap) == 0.0) return cap;
    double lo = 0, hi = cap;
    while (hi - lo > tol) {
        double mid = 0.5 * (lo + hi);
        if (u1(mid) == 0.0)
            lo = mid;
        else
            hi = mid;
    }
    return lo;
}

DyadicIndicator DyadicIndicator::translated(const Point& v) const
{
    DyadicIndicator u = *this;
    for (int i = 0; i < d_; ++i) {
        u.root_lo_[i] += v[i];
        u.support_.lo[i] += v[i];
        u.support_.hi[i] += v[i];
    }
    return u;
}

DyadicIndicator DyadicIndicator::scaled_pow2(int k) const
{
    DyadicIndicator u = *this;
    for (int i = 0; i < d_; ++i) {
        u.root_lo_[i] = std::ldexp(root_lo_[i], k);
        u.support_.lo[i] = std::ldexp(support_.lo[i], k);
        u.support_.hi[i] = std::ldexp(support_.hi[i], k);
    }
    u.root_level_ = root_level_ - k;
    u.ell_max_ = ell_max_ - k;
    double f = std::ldexp(1.0, k * d_);
    for (auto& n : u.nodes_) n.vol0 *= f;
    return u;
}

std::vector<std::uint8_t> DyadicIndicator::codes() const
{
    std::vector<std::uint8_t> out;
    out.reserve(nodes_.size());
    std::function<void(std::uint32_t)> walk = [&](std::uint32_t n) {
        out.push_back(nodes_[n].state);
        if (nodes_[n].state == kMixed)
            for (int c = 0; c < (1 << d_); ++c) walk(nodes_[n].child + c);
    };
    walk(0);
    return out;
}

std::vector<Box> DyadicIndicator::full_leaves() const
{
    std::vector<Box> out;
    std::function<void(std::uint32_t, const Box&)> walk = [&](std::uint32_t n, const Box& b) {
        if (nodes_[n].state == kFull)
            out.push_back(b);
        else if (nodes_[n].state == kMixed)
            for (int c = 0; c < (1 << d_); ++c) walk(nodes_[n].child + c, child_box(b, c));
    };
    walk(0, root_box());
    return out;
}

void DyadicIndicator::visit_full_leaves(const Box& region,
                                        const std::function<void(const Box&)>& f) const
{
    std::function<void(std::uint32_t, const Box&)> walk = [&](std::uint32_t n, const Box& b) {
        if (nodes_[n].state == kEmpty || overlap_volume(b, region) <= 0) return;
        if (nodes_[n].state == kFull) {
            f(b);
            return;
        }
        for (int c = 0; c < (1 << d_); ++c) walk(nodes_[n].child + c, child_box(b, c));
    };
    walk(0, root_box());
}

std::vector<Box> DyadicIndicator::boundary_faces() const
{
    std::vector<Box> faces;
    Box root = root_box();
    for (const Box& leaf : full_leaves()) {
        for (int k = 0; k < d_; ++k) {
            for (int sgn = 0; sgn < 2; ++sgn) {
                double c = sgn ? leaf.hi[k] : leaf.lo[k];
                Box face = leaf;
                face.lo[k] = face.hi[k] = c;
                bool beyond = sgn ? (c >= root.hi[k]) : (c <= root.lo[k]);
                if (beyond) {
                    faces.push_back(face);
                    continue;
                }
                // empty leaves on the far side of the face
                std::function<void(std::uint32_t, const Box&)> walk = [&](std::uint32_t n,
                                                                          const Box& b) {
                    bool touches = sgn ? (b.lo[k] <= c && b.hi[k] > c)
                                       : (b.lo[k] < c && b.hi[k] >= c);
                    if (!touches) return;
                    for (int i = 0; i < d_; ++i) {
                        if (i == k) continue;
                        if (std::min(b.hi[i], face.hi[i]) - std::max(b.lo[i], face.lo[i]) <= 0)
                            return;
                    }
                    if (nodes_[n].state == kFull) return;
                    if (nodes_[n].state == kEmpty) {
                        Box f = face;
                        for (int i = 0; i < d_; ++i) {
                            if (i == k) continue;
                            f.lo[i] = std::max(b.lo[i], face.lo[i]);
                            f.hi[i] = std::min(b.hi[i], face.hi[i]);
                        }
                        faces.push_back(f);
                        return;
                    }
                    for (int ch = 0; ch < (1 << d_); ++ch)
                        walk(nodes_[n].child + ch, child_box(b, ch));
                };
                walk(0, root);
            }
        }
    }
    return faces;
}

// ---------------------------------------------------------------------------
// CompactSetSpec

namespace {

double box_euclid_dist(int d, const Point& lo, const Point& hi, const Point& x)
{
    double s = 0;
    for (int i = 0; i < d; ++i) {
        double e = 0;
        if (x[i] < lo[i])
            e = lo[i] - x[i];
        else if (x[i] > hi[i])
            e = x[i] - hi[i];
        s += e * e;
    }
    return std::sqrt(s);
}

} // namespace

void CompactSetSpec::add_box(const Box& b)
{
    if (b.empty()) throw std::invalid_argument("add_box: empty box");
    parts.push_back({b.lo, b.hi, 0.0});
}

void CompactSetSpec::add_ball(const Point& c, double r)
{
    if (!(r >= 0)) throw std::invalid_argument("add_ball: negative radius");
    parts.push_back({c, c, r});
}

bool CompactSetSpec::contains(const Point& x) const
{
    for (const auto& p : parts)
        if (box_euclid_dist(d, p.lo, p.hi, x) <= p.rho) return true;
    return false;
}

double CompactSetSpec::euclid_distance(const Point& x) const
{
    double best = INFINITY;
    for (const auto& p : parts)
        best = std::min(best, std::max(0.0, box_euclid_dist(d, p.lo, p.hi, x) - p.rho));
    return best;
}

double CompactSetSpec::sup_extent() const
{
    double m = 0;
    for (const auto& p : parts)
        for (int i = 0; i < d; ++i)
            m = std::max({m, std::abs(p.lo[i]) + p.rho, std::abs(p.hi[i]) + p.rho});
    return m;
}

Box CompactSetSpec::bounding_box() const
{
    Box b{d, {}, {}};
    for (int i = 0; i < d; ++i) {
        b.lo[i] = INFINITY;
        b.hi[i] = -INFINITY;
    }
    for (const auto& p : parts)
        for (int i = 0; i < d; ++i) {
            b.lo[i] = std::min(b.lo[i], p.lo[i] - p.rho);
            b.hi[i] = std::max(b.hi[i], p.hi[i] + p.rho);
        }
    return b;
}

bool CompactSetSpec::all_boxes() const
{
    for (const auto& p : parts)
        if (p.rho != 0.0) return false;
    return true;
}

CompactSetSpec dilate(const CompactSetSpec& a, double delta)
{
    if (!(delta >= 0)) throw std::invalid_argument("dilate: delta must be nonnegative");
    CompactSetSpec r = a;
    for (auto& p : r.parts)
        for (int i = 0; i < a.d; ++i) {
            p.lo[i] -= delta;
            p.hi[i] += delta;
        }
    return r;
}

// ---------------------------------------------------------------------------
// Raster

Raster::Raster(int d_, std::array<int, kMaxDim> n_, Point origin_, double h_)
    : d(d_), n(n_), origin(origin_), h(h_)
{
    std::size_t total = 1;
    for (int i = 0; i < d; ++i) {
        if (n[i] <= 0) throw std::invalid_argument("Raster: nonpositive extent");
        total *= static_cast<std::size_t>(n[i]);
    }
    cells.assign(total, 0);
}

std::size_t Raster::stride(int k) const
{
    std::size_t s = 1;
    for (int i = 0; i < k; ++i) s *= static_cast<std::size_t>(n[i]);
    return s;
}

std::size_t Raster::index(const std::array<int, kMaxDim>& c) const
{
    std::size_t idx = 0, s = 1;
    for (int i = 0; i < d; ++i) {
        idx += static_cast<std::size_t>(c[i]) * s;
        s *= static_cast<std::size_t>(n[i]);
    }
    return idx;
}

std::array<int, kMaxDim> Raster::coords(std::size_t idx) const
{
    std::array<int, kMaxDim> c{};
    for (int i = 0; i < d; ++i) {
        c[i] = static_cast<int>(idx % static_cast<std::size_t>(n[i]));
        idx /= static_cast<std::size_t>(n[i]);
    }
    return c;
}

Point Raster::center(std::size_t idx) const
{
    auto c = coords(idx);
    Point p{};
    for (int i = 0; i < d; ++i) p[i] = origin[i] + (c[i] + 0.5) * h;
    return p;
}

namespace {

template <class Visit>
void for_each_face_neighbor(const Raster& r, std::size_t idx, const std::array<int, kMaxDim>& c,
                            Visit&& visit)
{
    std::size_t s = 1;
    for (int i = 0; i < r.d; ++i) {
        if (c[i] > 0) visit(idx - s);
        if (c[i] + 1 < r.n[i]) visit(idx + s);
        s *= static_cast<std::size_t>(r.n[i]);
    }
}

bool on_frame(const Raster& r, const std::array<int, kMaxDim>& c)
{
    for (int i = 0; i < r.d; ++i)
        if (c[i] == 0 || c[i] + 1 == r.n[i]) return true;
    return false;
}

} // namespace

Raster unbounded_complement_component(const Raster& blocked)
{
    Raster out = blocked;
    std::fill(out.cells.begin(), out.cells.end(), 0);
    std::vector<std::size_t> queue;
    for (std::size_t idx = 0; idx < blocked.size(); ++idx) {
        if (blocked.cells[idx]) continue;
        if (on_frame(blocked, blocked.coords(idx))) {
            out.cells[idx] = 1;
            queue.push_back(idx);
        }
    }
    if (queue.empty()) throw std::runtime_error("no unbounded component at this resolution");
    for (std::size_t head = 0; head < queue.size(); ++head) {
        std::size_t idx = queue[head];
        for_each_face_neighbor(blocked, idx, blocked.coords(idx), [&](std::size_t nb) {
            if (!blocked.cells[nb] && !out.cells[nb]) {
                out.cells[nb] = 1;
                queue.push_back(nb);
            }
        });
    }
    return out;
}

std::vector<std::int32_t> label_components(const Raster& r, std::uint8_t value, int* count)
{
    std::vector<std::int32_t> lab(r.size(), 0);
    int next = 0;
    std::vector<std::size_t> queue;
    for (std::size_t s = 0; s < r.size(); ++s) {
        if (r.cells[s] != value || lab[s]) continue;
        ++next;
        lab[s] = next;
        queue.clear();
        queue.push_back(s);
        for (std::size_t head = 0; head < queue.size(); ++head) {
            std::size_t idx = queue[head];
            for_each_face_neighbor(r, idx, r.coords(idx), [&](std::size_t nb) {
                if (r.cells[nb] == value && !lab[nb]) {
                    lab[nb] = next;
                    queue.push_back(nb);
                }
            });
        }
    }
    if (count) *count = next;
    return lab;
}

// ---------------------------------------------------------------------------
// Fixtures

CactusInfo cactus_info(int J, int L, int ell0)
{
    if (J < 1 || L < 1) throw std::invalid_argument("cactus: J >= 1 and L >= 1 required");
    CactusInfo info;
    for (int k = 0; k <= J; ++k) {
        info.levels.push_back(ell0 + k * L);
        info.delta.push_back(std::ldexp(8.0, -(ell0 + k * L)));
    }
    info.x.push_back(std::ldexp(4.0, -ell0));
    for (int k = 1; k <= J; ++k) info.x.push_back(info.x[k - 1] + info.delta[k - 1]);
    return info;
}

namespace {

Box slab_piece(int d, double x0, double x1, double half)
{
    Box b{d, {}, {}};
    b.lo[0] = x0;
    b.hi[0] = x1;
    for (int i = 1; i < d; ++i) {
        b.lo[i] = -half;
        b.hi[i] = half;
    }
    return b;
}

Box hull(const std::vector<Box>& bs)
{
    Box h = bs.front();
    for (const auto& b : bs)
        for (int i = 0; i < b.d; ++i) {
            h.lo[i] = std::min(h.lo[i], b.lo[i]);
            h.hi[i] = std::max(h.hi[i], b.hi[i]);
        }
    return h;
}

std::vector<Box> cactus_boxes(int d, const CactusInfo& info)
{
    std::vector<Box> inc;
    inc.push_back(Box::cube(d, Point{}, info.x[0]));
    for (std::size_t k = 1; k < info.levels.size(); ++k)
        inc.push_back(slab_piece(d, info.x[k - 1], info.x[k], 0.5 * info.delta[k]));
    return inc;
}

} // namespace

DyadicIndicator cactus_pile(int d, int J, int L, int ell0)
{
    CactusInfo info = cactus_info(J, L, ell0);
    auto inc = cactus_boxes(d, info);
    return DyadicIndicator::from_csg(d, info.levels.back() + 2, hull(inc), inc, {},
                                     "cactus_pile");
}

DyadicIndicator crossing_order(int d, int L, int ell0)
{
    CactusInfo info = cactus_info(2, L, ell0);
    auto inc = cactus_boxes(d, info);
    inc.push_back(slab_piece(d, -info.x[1], -info.x[0], 0.5 * info.delta[1]));
    Box t2 = slab_piece(d, -info.x[1] - info.delta[0], -info.x[1] + info.delta[1],
                        0.5 * info.delta[2]);
    return DyadicIndicator::from_csg(d, info.levels.back() + 2, hull(inc), inc, {t2},
                                     "crossing_order");
}

DyadicIndicator shell(int d, double R, double thickness, int ell_max)
{
    if (!(thickness > 0 && thickness < R)) throw std::invalid_argument("shell: need 0 < t < R");
    Box outer = Box::cube(d, Point{}, R);
    Box inner = Box::cube(d, Point{}, R - thickness);
    return DyadicIndicator::from_csg(d, ell_max, outer, {outer}, {inner}, "shell");
}

DyadicIndicator perforated_shell(int d, double R, double spacing, double hole, int ell_max)
{
    if (!(spacing > 0 && spacing < R && hole >= 0 && hole < spacing))
        throw std::invalid_argument("perforated_shell: need 0 <= hole < spacing < R");
    double cells = 2 * R / spacing;
    if (cells != std::floor(cells)) throw std::invalid_argument("perforated_shell: 2R/spacing must be integral");
    int m = static_cast<int>(cells);
    Box outer = Box::cube(d, Point{}, R);
    std::vector<Box> exc{Box::cube(d, Point{}, R - spacing)};
    if (hole > 0) {
        int tangential = d - 1;
        long count = 1;
        for (int i = 0; i < tangential; ++i) count *= m;
        for (int k = 0; k < d; ++k)
            for (int sgn = 0; sgn < 2; ++sgn)
                for (long t = 0; t < count; ++t) {
                    Box b{d, {}, {}};
                    long rem = t;
                    for (int i = 0; i < d; ++i) {
                        if (i == k) continue;
                        int j = static_cast<int>(rem % m);
                        rem /= m;
                        double c = -R + spacing * (j + 0.5);
                        b.lo[i] = c - 0.5 * hole;
                        b.hi[i] = c + 0.5 * hole;
                    }
                    b.lo[k] = sgn ? R - spacing : -R;
                    b.hi[k] = sgn ? R : -R + spacing;
                    exc.push_back(b);
                }
    }
    return DyadicIndicator::from_csg(d, ell_max, outer, {outer}, exc, "perforated_shell");
}

DyadicIndicator slab(int d, int R_exp, int ell_max)
{
    double R = std::ldexp(1.0, R_exp);
    Box b = Box::cube(d, Point{}, R);
    b.hi[0] = 0.0;
    return DyadicIndicator::from_csg(d, ell_max, b, {b}, {}, "slab");
}

DyadicIndicator cube_domain(int d, double half_side, int ell_max)
{
    Box b = Box::cube(d, Point{}, half_side);
    return DyadicIndicator::from_csg(d, ell_max, b, {b}, {}, "cube");
}

DyadicIndicator random_domain(int d, int ell_max, Stream& rng, double p_full, double p_empty)
{
    if (ell_max < 1) throw std::invalid_argument("random_domain: ell_max >= 1");
    std::vector<std::uint8_t> codes;
    const int nchild = 1 << d;
    std::function<void(int)> gen = [&](int level) {
        if (level >= ell_max) {
            codes.push_back(rng.uniform() < 0.5 ? 1 : 0);
            return;
        }
        double u = rng.uniform();
        if (level > 0 && u < p_full) {
            codes.push_back(1);
        } else if (level > 0 && u < p_full + p_empty) {
            codes.push_back(0);
        } else {
            codes.push_back(2);
            for (int c = 0; c < nchild; ++c) gen(level + 1);
        }
    };
    gen(0);
    bool any = std::find(codes.begin(), codes.end(), 1) != codes.end();
    if (!any) {
        // force one full cell: the last leaf
        for (auto it = codes.rbegin(); it != codes.rend(); ++it)
            if (*it == 0) {
                *it = 1;
                break;
            }
    }
    Box support{d, {}, {}};
    for (int i = 0; i < d; ++i) support.hi[i] = 1.0;
    return DyadicIndicator::from_codes(d, ell_max, support, codes, "random");
}

// ---------------------------------------------------------------------------
// Serialization

namespace {
const char* kB64 = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(const std::vector<std::uint8_t>& bytes)
{
    std::string out;
    std::size_t i = 0;
    for (; i + 2 < bytes.size(); i += 3) {
        std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
        out += kB64[(v >> 18) & 63];
        out += kB64[(v >> 12) & 63];
        out += kB64[(v >> 6) & 63];
        out += kB64[v & 63];
    }
    std::size_t rem = bytes.size() - i;
    if (rem == 1) {
        std::uint32_t v = bytes[i] << 16;
        out += kB64[(v >> 18) & 63];
        out += kB64[(v >> 12) & 63];
        out += "==";
    } else if (rem == 2) {
        std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8);
        out += kB64[(v >> 18) & 63];
        out += kB64[(v >> 12) & 63];
        out += kB64[(v >> 6) & 63];
        out += '=';
    }
    return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text)
{
    std::array<int, 256> rev;
    rev.fill(-1);
    for (int i = 0; i < 64; ++i) rev[static_cast<unsigned char>(kB64[i])] = i;
    std::vector<std::uint8_t> out;
    std::uint32_t acc = 0;
    int bits = 0;
    for (char ch : text) {
        if (ch == '=') break;
        int v = rev[static_cast<unsigned char>(ch)];
        if (v < 0) throw SchemaError("cells: invalid base64 character");
        acc = (acc << 6) | static_cast<std::uint32_t>(v);
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            out.push_back(static_cast<std::uint8_t>((acc >> bits) & 0xff));
        }
    }
    return out;
}

std::vector<std::uint8_t> rle_encode(const std::vector<std::uint8_t>& codes)
{
    std::vector<std::uint8_t> out;
    std::size_t i = 0;
    while (i < codes.size()) {
        std::size_t j = i;
        while (j < codes.size() && codes[j] == codes[i]) ++j;
        std::uint64_t run = j - i;
        while (run >= 0x80) {
            out.push_back(static_cast<std::uint8_t>(run | 0x80));
            run >>= 7;
        }
        out.push_back(static_cast<std::uint8_t>(run));
        out.push_back(codes[i]);
        i = j;
    }
    return out;
}

std::vector<std::uint8_t> rle_decode(const std::vector<std::uint8_t>& bytes)
{
    std::vector<std::uint8_t> out;
    std::size_t i = 0;
    while (i < bytes.size()) {
        std::uint64_t run = 0;
        int shift = 0;
        for (;;) {
            if (i >= bytes.size()) throw SchemaError("cells: truncated run length");
            std::uint8_t b = bytes[i++];
            run |= static_cast<std::uint64_t>(b & 0x7f) << shift;
            if (!(b & 0x80)) break;
            shift += 7;
            if (shift > 56) throw SchemaError("cells: run length overflow");
        }
        if (i >= bytes.size()) throw SchemaError("cells: missing run value");
        std::uint8_t v = bytes[i++];
        if (run > (1ull << 32)) throw SchemaError("cells: run too long");
        out.insert(out.end(), run, v);
    }
    return out;
}

nlohmann::json domain_to_json(const DyadicIndicator& u)
{
    nlohmann::json j;
    j["d"] = u.dimension();
    j["ell_max"] = u.ell_max();
    nlohmann::json sup = nlohmann::json::array();
    for (int i = 0; i < u.dimension(); ++i) sup.push_back({u.support().lo[i], u.support().hi[i]});
    j["support"] = sup;
    j["encoding"] = "tree-preorder/rle/base64";
    j["cells"] = base64_encode(rle_encode(u.codes()));
    if (!u.name().empty()) j["name"] = u.name();
    return j;
}

DyadicIndicator domain_from_json(const nlohmann::json& j)
{
    try {
        int d = j.at("d").get<int>();
        int ell_max = j.at("ell_max").get<int>();
        if (d < 3 || d > kMaxDim) throw SchemaError("/d: must be in [3,6]");
        const auto& sup = j.at("support");
        if (!sup.is_array() || static_cast<int>(sup.size()) != d)
            throw SchemaError("/support: expected d pairs [lo,hi]");
        Box b{d, {}, {}};
        for (int i = 0; i < d; ++i) {
            b.lo[i] = sup[i].at(0).get<double>();
            b.hi[i] = sup[i].at(1).get<double>();
            if (!(b.hi[i] > b.lo[i])) throw SchemaError("/support: empty interval");
        }
        if (j.contains("encoding") && j["encoding"] != "tree-preorder/rle/base64")
            throw SchemaError("/encoding: unsupported");
        auto codes = rle_decode(base64_decode(j.at("cells").get<std::string>()));
        std::string name = j.value("name", std::string{});
        return DyadicIndicator::from_codes(d, ell_max, b, codes, name);
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("domain json: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw SchemaError(std::string("domain json: ") + e.what());
    }
}

} // namespace solidify
