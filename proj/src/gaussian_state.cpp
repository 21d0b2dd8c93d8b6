#include "ffmagic/gaussian_state.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace ffmagic {

Region::Region(std::vector<int> s) : sites(std::move(s)) {
  std::sort(sites.begin(), sites.end());
  if (std::adjacent_find(sites.begin(), sites.end()) != sites.end())
    throw InputError("Region: duplicate sites");
}

Region Region::interval(int first, int count, int n_modes) {
  if (n_modes <= 0) throw InputError("Region::interval: n_modes must be positive");
  if (count < 0 || count > n_modes) throw InputError("Region::interval: bad count");
  if (first < 0 || first >= n_modes) throw InputError("Region::interval: bad start");
  std::vector<int> s;
  s.reserve(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) s.push_back((first + k) % n_modes);
  return Region(std::move(s));
}

Region Region::complement(const Region& r, int n_modes) {
  r.validate(n_modes);
  std::vector<int> s;
  s.reserve(static_cast<std::size_t>(n_modes - r.size()));
  std::size_t k = 0;
  for (int i = 0; i < n_modes; ++i) {
    if (k < r.sites.size() && r.sites[k] == i) {
      ++k;
      continue;
    }
    s.push_back(i);
  }
  return Region(std::move(s));
}

bool Region::contains(int site) const {
  return std::binary_search(sites.begin(), sites.end(), site);
}

std::vector<int> Region::majoranas() const {
  std::vector<int> m;
  m.reserve(2 * sites.size());
  for (int s : sites) {
    m.push_back(2 * s);
    m.push_back(2 * s + 1);
  }
  return m;
}

void Region::validate(int n_modes) const {
  for (int s : sites)
    if (s < 0 || s >= n_modes) throw InputError("Region: site out of range");
}

GaussianState GaussianState::product_state(int n_modes, const std::vector<int>& bits) {
  if (n_modes <= 0) throw InputError("product_state: n_modes must be positive");
  if (!bits.empty() && static_cast<int>(bits.size()) != n_modes)
    throw InputError("product_state: bits must be empty or of length n_modes");
  CMatrix alpha = CMatrix::Zero(n_modes, 2 * n_modes);
  for (int j = 0; j < n_modes; ++j) {
    const int b = bits.empty() ? 0 : bits[static_cast<std::size_t>(j)];
    if (b != 0 && b != 1) throw InputError("product_state: bits must be 0 or 1");
    // |0>: annihilator (g_{2j} + i g_{2j+1})/2; |1>: its conjugate.
    alpha(j, 2 * j) = 0.5;
    alpha(j, 2 * j + 1) = std::complex<double>(0.0, b == 0 ? 0.5 : -0.5);
  }
  GaussianState st;
  st.n_ = n_modes;
  st.alpha_ = std::move(alpha);
  return st;
}

GaussianState GaussianState::from_alpha(CMatrix alpha) {
  const int n = static_cast<int>(alpha.rows());
  if (n <= 0 || alpha.cols() != 2 * n) throw InputError("from_alpha: alpha must be N x 2N");
  GaussianState st;
  st.n_ = n;
  st.alpha_ = std::move(alpha);
  if (st.orthonormality_defect() > num_tol().orthonormality_check)
    throw InputError("from_alpha: rows are not orthonormal");
  return st;
}

GaussianState GaussianState::tensor_product(const GaussianState& a, const GaussianState& b) {
  GaussianState st;
  st.n_ = a.n_ + b.n_;
  st.alpha_ = CMatrix::Zero(st.n_, 2 * st.n_);
  st.alpha_.block(0, 0, a.n_, 2 * a.n_) = a.alpha_;
  st.alpha_.block(a.n_, 2 * a.n_, b.n_, 2 * b.n_) = b.alpha_;
  return st;
}

const Matrix& GaussianState::covariance() const {
  if (!gamma_) gamma_ = covariance_from_alpha(alpha_).mat();
  return *gamma_;
}

double GaussianState::expectation_z(int site) const {
  if (site < 0 || site >= n_) throw InputError("expectation_z: site out of range");
  if (gamma_) return (*gamma_)(2 * site, 2 * site + 1);
  const std::complex<double> g = alpha_.col(2 * site).dot(alpha_.col(2 * site + 1));
  return 4.0 * g.imag();
}

namespace {

std::vector<double> region_singular_values(const Matrix& gamma, const Region& region) {
  const std::vector<int> idx = region.majoranas();
  Matrix sub(idx.size(), idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (std::size_t j = 0; j < idx.size(); ++j)
      sub(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = gamma(idx[i], idx[j]);
  Eigen::JacobiSVD<Matrix> svd(sub);
  std::vector<double> out(svd.singularValues().data(),
                          svd.singularValues().data() + svd.singularValues().size());
  return out;
}

}  // namespace

double GaussianState::entanglement_entropy(const Region& region, int renyi_index) const {
  region.validate(n_);
  if (renyi_index != 1 && renyi_index != 2)
    throw InputError("entanglement_entropy: renyi_index must be 1 or 2");
  if (region.size() == 0 || region.size() == n_) return 0.0;
  double acc = 0.0;
  for (double nu : region_singular_values(covariance(), region)) {
    if (nu > 1.0 + 1e-6)
      throw InstabilityError("entanglement_entropy: covariance singular value above 1");
    nu = std::min(nu, 1.0);
    if (renyi_index == 1) {
      const double p = 0.5 * (1.0 + nu);
      if (p > 0.0 && p < 1.0) acc += -p * std::log(p) - (1.0 - p) * std::log(1.0 - p);
    } else {
      acc += -std::log(0.5 * (1.0 + nu * nu));
    }
  }
  // Every correlation level appears twice among the singular values.
  return std::max(0.5 * acc, 0.0);
}

void GaussianState::apply_orthogonal_columns(const std::array<int, 4>& cols,
                                             const Eigen::Matrix4d& o) {
  for (int c : cols)
    if (c < 0 || c >= 2 * n_) throw InputError("apply_orthogonal_columns: column out of range");
  Eigen::Matrix<std::complex<double>, Eigen::Dynamic, 4> block(n_, 4);
  for (int k = 0; k < 4; ++k) block.col(k) = alpha_.col(cols[k]);
  block *= o;
  for (int k = 0; k < 4; ++k) alpha_.col(cols[k]) = block.col(k);
  gamma_.reset();
}

void GaussianState::apply_matrix_columns(int site, const Eigen::Matrix2cd& b) {
  if (site < 0 || site >= n_) throw InputError("apply_matrix_columns: site out of range");
  const int c0 = 2 * site;
  const int c1 = 2 * site + 1;
  const Eigen::VectorXcd a0 = alpha_.col(c0);
  const Eigen::VectorXcd a1 = alpha_.col(c1);
  alpha_.col(c0) = a0 * b(0, 0) + a1 * b(1, 0);
  alpha_.col(c1) = a0 * b(0, 1) + a1 * b(1, 1);
  gamma_.reset();
}

void GaussianState::project_mode(int site, int outcome) {
  if (site < 0 || site >= n_) throw InputError("project_mode: site out of range");
  if (outcome != 1 && outcome != -1) throw InputError("project_mode: outcome must be +-1");
  const int c0 = 2 * site;
  const int c1 = 2 * site + 1;
  const std::complex<double> is(0.0, static_cast<double>(outcome));
  // Overlap of each row against the pinned mode; sum |u|^2 equals the Born
  // probability of this branch, so a valid branch always has a usable pivot.
  const Eigen::VectorXcd u = alpha_.col(c0) - is * alpha_.col(c1);
  Eigen::Index pivot = 0;
  const double umax = u.cwiseAbs().maxCoeff(&pivot);
  if (umax < 1e-12)
    throw DegeneracyError("project_mode: branch has no support on the pinned mode");
  const Eigen::RowVectorXcd pivot_row = alpha_.row(pivot);
  const std::complex<double> upivot = u(pivot);
  for (Eigen::Index k = 0; k < n_; ++k) {
    if (k == pivot) continue;
    alpha_.row(k) -= (u(k) / upivot) * pivot_row;
    alpha_(k, c0) = 0.0;
    alpha_(k, c1) = 0.0;
  }
  alpha_.row(pivot).setZero();
  alpha_(pivot, c0) = 0.5;
  alpha_(pivot, c1) = 0.5 * is;
  gamma_.reset();
}

void GaussianState::reorthonormalize() {
  alpha_ = orthonormalize(alpha_);
  gamma_.reset();
}

double GaussianState::orthonormality_defect() const {
  const CMatrix g = alpha_ * alpha_.adjoint();
  return (g - 0.5 * CMatrix::Identity(n_, n_)).cwiseAbs().maxCoeff();
}

nlohmann::json GaussianState::to_json() const {
  nlohmann::json re = nlohmann::json::array();
  nlohmann::json im = nlohmann::json::array();
  for (int i = 0; i < n_; ++i) {
    nlohmann::json row_re = nlohmann::json::array();
    nlohmann::json row_im = nlohmann::json::array();
    for (int j = 0; j < 2 * n_; ++j) {
      row_re.push_back(alpha_(i, j).real());
      row_im.push_back(alpha_(i, j).imag());
    }
    re.push_back(std::move(row_re));
    im.push_back(std::move(row_im));
  }
  return nlohmann::json{{"format", "ffmagic.gaussian_state"},
                        {"version", 1},
                        {"n_modes", n_},
                        {"rng_tag", rng_tag_},
                        {"alpha_re", std::move(re)},
                        {"alpha_im", std::move(im)}};
}

GaussianState GaussianState::from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.value("format", "") != "ffmagic.gaussian_state")
    throw InputError("GaussianState::from_json: not a gaussian state snapshot");
  if (j.value("version", 0) != 1)
    throw InputError("GaussianState::from_json: unsupported snapshot version");
  const int n = j.at("n_modes").get<int>();
  if (n <= 0) throw InputError("GaussianState::from_json: bad n_modes");
  const auto& re = j.at("alpha_re");
  const auto& im = j.at("alpha_im");
  if (static_cast<int>(re.size()) != n || static_cast<int>(im.size()) != n)
    throw InputError("GaussianState::from_json: row count mismatch");
  CMatrix alpha(n, 2 * n);
  for (int i = 0; i < n; ++i) {
    const auto& row_re = re.at(static_cast<std::size_t>(i));
    const auto& row_im = im.at(static_cast<std::size_t>(i));
    if (static_cast<int>(row_re.size()) != 2 * n || static_cast<int>(row_im.size()) != 2 * n)
      throw InputError("GaussianState::from_json: column count mismatch");
    for (int k = 0; k < 2 * n; ++k)
      alpha(i, k) = std::complex<double>(row_re.at(static_cast<std::size_t>(k)).get<double>(),
                                         row_im.at(static_cast<std::size_t>(k)).get<double>());
  }
  GaussianState st = from_alpha(std::move(alpha));
  st.set_rng_tag(j.value("rng_tag", ""));
  return st;
}

void GaussianState::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw InputError("GaussianState::save: cannot open " + path);
  out << to_json().dump();
  if (!out) throw InputError("GaussianState::save: write failed for " + path);
}

GaussianState GaussianState::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("GaussianState::load: cannot open " + path);
  nlohmann::json j;
  in >> j;
  return from_json(j);
}

}  // namespace ffmagic
