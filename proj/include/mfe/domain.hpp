#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <complex>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mfe {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(const Vec2&, const Vec2&) = default;
  [[nodiscard]] double norm() const;
};

struct Circle {
  Vec2 center;
  double radius = 1.0;
  friend bool operator==(const Circle&, const Circle&) = default;
};

enum class DomainKind { rectangle, disk, annulus, rectangle_with_hole };

std::string to_string(DomainKind kind);
DomainKind domain_kind_from_string(const std::string& name);

/// Geometry of Omega plus the grid spacing. Omega is an outer rectangle or
/// disk minus at most one circular hole.
struct DomainSpec {
  DomainKind kind = DomainKind::disk;
  Vec2 lo{-1.0, -1.0};
  Vec2 hi{1.0, 1.0};
  Circle outer{{0.0, 0.0}, 1.0};
  std::optional<Circle> hole;
  double h = 1.0 / 64.0;

  static DomainSpec rectangle(Vec2 lo, Vec2 hi, double h);
  static DomainSpec unit_square(double h) { return rectangle({0.0, 0.0}, {1.0, 1.0}, h); }
  static DomainSpec disk(Vec2 center, double radius, double h);
  static DomainSpec annulus(Vec2 center, double r_inner, double r_outer, double h);
  static DomainSpec rectangle_with_hole(Vec2 lo, Vec2 hi, Circle hole, double h);

  void validate() const;
  [[nodiscard]] bool contains(Vec2 p) const;
  [[nodiscard]] double distance_to_boundary(Vec2 p) const;
  /// Distance from an interior point to the first boundary crossing along an
  /// axis direction (dx, dy) in {(+-1,0),(0,+-1)}.
  [[nodiscard]] double exit_distance(Vec2 p, int dx, int dy) const;
  /// Exact area of Omega intersected with [xa,xb] x [ya,yb].
  [[nodiscard]] double area_in_box(double xa, double xb, double ya, double yb) const;
  [[nodiscard]] double area() const;
  friend bool operator==(const DomainSpec&, const DomainSpec&) = default;
};

/// Area of a disk intersected with an axis-aligned box, in closed form.
double disk_box_area(const Circle& c, double xa, double xb, double ya, double yb);

/// Grid function on the interior nodes. Non-interior nodes carry the single
/// value `boundary_value`, which is 0 for Dirichlet data.
struct Field {
  Eigen::VectorXd values;
  double boundary_value = 0.0;

  [[nodiscard]] double max() const;
  [[nodiscard]] double min() const;
  [[nodiscard]] double sup_norm() const;
};

using SparseMatrix = Eigen::SparseMatrix<double>;

/// Cartesian node grid over Omega with cut-cell boundary arms.
///
/// A node is interior when it lies strictly inside Omega and no boundary
/// crossing is closer than kMinArm * h along the four axis directions. The
/// discrete -Lap is symmetric: an edge between interior nodes has weight 1/h^2,
/// an arm of length s ending on the boundary has weight 1/(h s).
/// Quadrature weights are the exact areas |Omega cap cell|.
class DiscreteDomain {
 public:
  static constexpr double kMinArm = 1e-4;

  explicit DiscreteDomain(DomainSpec spec);

  [[nodiscard]] const DomainSpec& spec() const { return spec_; }
  [[nodiscard]] double h() const { return spec_.h; }
  [[nodiscard]] int nx() const { return nx_; }
  [[nodiscard]] int ny() const { return ny_; }
  [[nodiscard]] Vec2 node(int i, int j) const { return {origin_.x + i * h(), origin_.y + j * h()}; }
  [[nodiscard]] Eigen::Index size() const { return static_cast<Eigen::Index>(cells_.size()); }
  /// Interior index of node (i, j), or -1.
  [[nodiscard]] int index(int i, int j) const;
  [[nodiscard]] Vec2 position(Eigen::Index k) const { return node(cells_[k].i, cells_[k].j); }
  [[nodiscard]] std::pair<int, int> grid_ij(Eigen::Index k) const { return {cells_[k].i, cells_[k].j}; }
  [[nodiscard]] bool is_interior(int i, int j) const { return index(i, j) >= 0; }

  [[nodiscard]] const Eigen::VectorXd& weights() const { return weights_; }
  [[nodiscard]] double boundary_strip_area() const { return strip_area_; }
  [[nodiscard]] double area() const { return area_; }
  [[nodiscard]] const SparseMatrix& laplacian() const { return laplacian_; }
  /// Boundary-arm coefficients sum_d 1/(h s_d) per interior node.
  [[nodiscard]] const Eigen::VectorXd& arm_coefficients() const { return arm_coeff_; }

  [[nodiscard]] Field zero_field() const;
  [[nodiscard]] Field sample(const std::function<double(Vec2)>& f) const;
  [[nodiscard]] double integrate(const Field& f) const;
  /// Bilinear interpolation over the node grid; non-interior nodes take
  /// the boundary value.
  [[nodiscard]] double interpolate(const Field& f, Vec2 p) const;
  /// Interior node nearest to p; throws if p is outside Omega or no interior
  /// node is within one cell.
  [[nodiscard]] Eigen::Index nearest_interior(Vec2 p) const;

  /// Discrete -Lap with zero Dirichlet closure.
  [[nodiscard]] Field laplacian_apply(const Field& u) const;
  /// Number of 8-connected components of the boundary layer (non-interior
  /// nodes 4-adjacent to an interior node).
  [[nodiscard]] int boundary_components() const;

  void check_shape(const Field& f) const;

 private:
  struct Cell {
    int i;
    int j;
  };

  DomainSpec spec_;
  Vec2 origin_;
  int nx_ = 0;
  int ny_ = 0;
  std::vector<int> index_;
  std::vector<Cell> cells_;
  Eigen::VectorXd weights_;
  Eigen::VectorXd arm_coeff_;
  double strip_area_ = 0.0;
  double area_ = 0.0;
  SparseMatrix laplacian_;
};

/// Sparse direct solver for the discrete Dirichlet problem -Lap u = rhs.
/// Holds its own factorization; the domain must outlive it.
class PoissonSolver {
 public:
  explicit PoissonSolver(const DiscreteDomain& domain);
  ~PoissonSolver();
  PoissonSolver(PoissonSolver&&) noexcept;
  PoissonSolver& operator=(PoissonSolver&&) = delete;

  [[nodiscard]] Field solve(const Field& rhs) const;
  [[nodiscard]] const DiscreteDomain& domain() const { return domain_; }

 private:
  struct Impl;
  const DiscreteDomain& domain_;
  std::unique_ptr<Impl> impl_;
};

/// Raised when a linear solve misses its residual target.
class SolveFailure : public std::runtime_error {
 public:
  SolveFailure(const std::string& what, double residual)
      : std::runtime_error(what), residual_(residual) {}
  [[nodiscard]] double residual() const { return residual_; }

 private:
  double residual_;
};

Field poisson_solve(const DiscreteDomain& domain, const Field& rhs);

/// G(., y) with a discrete delta of mass 1/h^2 at the interior node nearest y.
Field green_function(const PoissonSolver& solver, Vec2 y);
Field green_function(const DiscreteDomain& domain, Vec2 y);

/// H(x, y) = G(x, y) + log|x - y| / (2 pi). On the diagonal the lattice
/// singularity is removed from the 4-neighbour average of G(., y).
double regular_part(const PoissonSolver& solver, Vec2 x, Vec2 y);
double regular_part(const DiscreteDomain& domain, Vec2 x, Vec2 y);

/// Continuum lattice constant: the 5-point Green's function on Z^2 behaves like
/// (log|x| + euler_gamma + 1.5 log 2) / (2 pi) far from the source.
inline constexpr double kLatticeGreenOffset = 0.57721566490153286 + 1.5 * 0.69314718055994531;

/// Circle Gamma around the hole, with chi(x) = (x - center) / r_gamma.
struct EmbeddedCurve {
  Vec2 center;
  double r_gamma = 1.0;
  double eps0 = 0.1;
  double rho = 0.1;
  double chi_lipschitz = 1.0;
  double chi_max = 1.0;

  [[nodiscard]] Vec2 gamma(double theta) const;
  [[nodiscard]] std::complex<double> chi(Vec2 x) const;

  /// Defaults: r_gamma = sqrt(r_hole * r_out) where r_out is the distance from
  /// the hole center to the outer boundary, eps0 = half the distance from Gamma
  /// to the boundary, rho = r_hole / (2 r_gamma).
  static EmbeddedCurve around_hole(const DomainSpec& spec, std::optional<double> r_gamma = {},
                                   std::optional<double> eps0 = {});
  /// Throws std::invalid_argument naming the first violated invariant.
  void validate(const DiscreteDomain& domain) const;
};

}  // namespace mfe
