#include "bimmsbm/model.hpp"

#include "bimmsbm/simd.hpp"

namespace bimmsbm {

ModelParams ModelParams::zeros(std::size_t k1, std::size_t k2, std::size_t j1, std::size_t j2, std::size_t jd) {
  ModelParams p;
  p.k1 = k1;
  p.k2 = k2;
  const auto i = [](std::size_t v) { return static_cast<Eigen::Index>(v); };
  p.b = Matrix::Zero(i(k1), i(k2));
  p.gamma = Vector::Zero(i(jd));
  p.beta1 = Matrix::Zero(i(k1), i(j1));
  p.beta2 = Matrix::Zero(i(k2), i(j2));
  return p;
}

void ModelParams::validate() const {
  if (k1 == 0 || k2 == 0) throw ValidationError("group counts must be positive");
  if (static_cast<std::size_t>(b.rows()) != k1 || static_cast<std::size_t>(b.cols()) != k2)
    throw ValidationError("B must be K1 x K2");
  if (static_cast<std::size_t>(beta1.rows()) != k1) throw ValidationError("beta1 must have K1 rows");
  if (static_cast<std::size_t>(beta2.rows()) != k2) throw ValidationError("beta2 must have K2 rows");
  if (!b.allFinite() || !gamma.allFinite() || !beta1.allFinite() || !beta2.allFinite())
    throw ValidationError("parameters must be finite");
}

void ModelParams::check_compatible(const BipartiteNetwork& net) const {
  validate();
  if (static_cast<std::size_t>(beta1.cols()) != net.j1())
    throw ValidationError("beta1 columns do not match family1 covariates");
  if (static_cast<std::size_t>(beta2.cols()) != net.j2())
    throw ValidationError("beta2 columns do not match family2 covariates");
  if (static_cast<std::size_t>(gamma.size()) != net.jd())
    throw ValidationError("gamma length does not match dyadic covariates");
}

PriorSpec PriorSpec::defaults(std::size_t k1, std::size_t k2, double sigma_b) {
  PriorSpec s;
  s.mu_b = Matrix::Zero(static_cast<Eigen::Index>(k1), static_cast<Eigen::Index>(k2));
  s.sigma_b = Matrix::Constant(static_cast<Eigen::Index>(k1), static_cast<Eigen::Index>(k2), sigma_b);
  return s;
}

void PriorSpec::validate(std::size_t k1, std::size_t k2) const {
  if (static_cast<std::size_t>(mu_b.rows()) != k1 || static_cast<std::size_t>(mu_b.cols()) != k2 ||
      static_cast<std::size_t>(sigma_b.rows()) != k1 || static_cast<std::size_t>(sigma_b.cols()) != k2)
    throw ValidationError("blockmodel prior must be K1 x K2");
  if (!(sigma_b.array() > 0).all() || !(sigma_gamma > 0) || !(sigma_beta1 > 0) || !(sigma_beta2 > 0))
    throw ValidationError("prior standard deviations must be positive");
}

namespace {

void fill_concentrations(const Matrix& design, const Matrix& beta, Matrix& alpha, Vector& xi, const char* family) {
  const auto n = design.rows();
  const auto k = beta.rows();
  alpha.resize(n, k);
  xi.resize(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    double total = 0.0;
    for (Eigen::Index g = 0; g < k; ++g) {
      const double a = std::exp(simd::dot(row_span(design, r), row_span(beta, g)));
      if (!std::isfinite(a) || !(a > 0.0))
        throw NumericalError(std::string("non-finite Dirichlet concentration in ") + family +
                             " (diverging monadic coefficients)");
      alpha(r, g) = a;
      total += a;
    }
    xi(r) = total;
  }
}

}  // namespace

DirichletConcentrations compute_concentrations(const ModelParams& params, const BipartiteNetwork& net) {
  params.check_compatible(net);
  DirichletConcentrations c;
  fill_concentrations(net.x(), params.beta1, c.alpha1, c.xi1, "family1");
  fill_concentrations(net.w(), params.beta2, c.alpha2, c.xi2, "family2");
  return c;
}

double edge_probability(const ModelParams& params, std::size_t g, std::size_t h, std::span<const double> d) {
  const double eta = params.b(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(h)) +
                     (d.empty() ? 0.0 : simd::dot(d, as_span(params.gamma)));
  return clamp_prob(logistic(eta));
}

DyadPrediction predict_dyad(const ModelParams& params, std::span<const double> d) {
  const double dg = d.empty() ? 0.0 : simd::dot(d, as_span(params.gamma));
  DyadPrediction out;
  out.theta = params.b.unaryExpr([dg](double eta) { return clamp_prob(logistic(eta + dg)); });
  return out;
}

nlohmann::json matrix_to_json(const Matrix& m) {
  auto j = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    auto row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    j.push_back(std::move(row));
  }
  return j;
}

Matrix matrix_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw ValidationError("expected a matrix (array of rows)");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows == 0 ? Eigen::Index{0} : static_cast<Eigen::Index>(j[0].size());
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (!j[r].is_array() || static_cast<Eigen::Index>(j[r].size()) != cols)
      throw ValidationError("ragged matrix in JSON");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

nlohmann::json vector_to_json(const Vector& v) {
  auto j = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v(i));
  return j;
}

Vector vector_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw ValidationError("expected an array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = j[i].get<double>();
  return v;
}

nlohmann::json to_json(const ModelParams& params, const PriorSpec& priors) {
  nlohmann::json j;
  j["K1"] = params.k1;
  j["K2"] = params.k2;
  j["B"] = matrix_to_json(params.b);
  j["gamma"] = vector_to_json(params.gamma);
  j["beta1"] = matrix_to_json(params.beta1);
  j["beta2"] = matrix_to_json(params.beta2);
  j["priors"] = {{"mu_b", matrix_to_json(priors.mu_b)},       {"sigma_b", matrix_to_json(priors.sigma_b)},
                 {"mu_gamma", priors.mu_gamma},                {"sigma_gamma", priors.sigma_gamma},
                 {"mu_beta1", priors.mu_beta1},                {"sigma_beta1", priors.sigma_beta1},
                 {"mu_beta2", priors.mu_beta2},                {"sigma_beta2", priors.sigma_beta2}};
  return j;
}

ModelParams params_from_json(const nlohmann::json& j) {
  try {
    ModelParams p;
    p.k1 = j.at("K1").get<std::size_t>();
    p.k2 = j.at("K2").get<std::size_t>();
    p.b = matrix_from_json(j.at("B"));
    p.gamma = vector_from_json(j.at("gamma"));
    p.beta1 = matrix_from_json(j.at("beta1"));
    p.beta2 = matrix_from_json(j.at("beta2"));
    p.validate();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed parameter JSON: ") + e.what());
  }
}

PriorSpec priors_from_json(const nlohmann::json& j, std::size_t k1, std::size_t k2) {
  PriorSpec s = PriorSpec::defaults(k1, k2);
  if (j.is_null()) return s;
  try {
    if (j.contains("mu_b")) s.mu_b = matrix_from_json(j["mu_b"]);
    if (j.contains("sigma_b")) s.sigma_b = matrix_from_json(j["sigma_b"]);
    s.mu_gamma = j.value("mu_gamma", s.mu_gamma);
    s.sigma_gamma = j.value("sigma_gamma", s.sigma_gamma);
    s.mu_beta1 = j.value("mu_beta1", s.mu_beta1);
    s.sigma_beta1 = j.value("sigma_beta1", s.sigma_beta1);
    s.mu_beta2 = j.value("mu_beta2", s.mu_beta2);
    s.sigma_beta2 = j.value("sigma_beta2", s.sigma_beta2);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed prior JSON: ") + e.what());
  }
  s.validate(k1, k2);
  return s;
}

}  // namespace bimmsbm
