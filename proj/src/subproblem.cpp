#include "cmtf/subproblem.hpp"

namespace cmtf {

double subproblemObjective(const FactorSubproblem& p, const Matrix& x, Matrix* gradient) {
  const Matrix& t = *p.unfolded;
  const Matrix& m = *p.coKr;
  const Matrix model = x * m.transpose();
  Matrix lossGrad(model.rows(), model.cols());
  const std::span<const double> tSpan(t.data(), static_cast<std::size_t>(t.size()));
  const std::span<const double> xSpan(model.data(), static_cast<std::size_t>(model.size()));
  std::span<double> gSpan;
  if (gradient) gSpan = std::span<double>(lossGrad.data(), static_cast<std::size_t>(lossGrad.size()));
  double value = p.weight * lossValueAndGradient(p.loss, tSpan, xSpan, gSpan, true);
  if (gradient) *gradient = p.weight * lossGrad * m;

  if (p.splitTarget) {
    const Matrix r = x - *p.splitTarget;
    value += 0.5 * p.rho * r.squaredNorm();
    if (gradient) *gradient += p.rho * r;
  }
  if (p.map) {
    const Matrix r = p.map->applyFactor(x) - p.couplingTarget;
    value += 0.5 * p.rho * r.squaredNorm();
    if (gradient) *gradient += p.rho * p.map->adjointFactor(r);
  }
  return value;
}

SubproblemResult solveFactorSubproblemGeneral(const FactorSubproblem& p, const Matrix& warmStart,
                                              const BoundedLbfgsOptions& options) {
  if (!p.unfolded || !p.coKr) throw std::invalid_argument("subproblem is missing its data");
  if (p.unfolded->cols() != p.coKr->rows() || warmStart.cols() != p.coKr->cols() ||
      warmStart.rows() != p.unfolded->rows()) {
    throw ShapeError("subproblem operands do not conform");
  }
  if (p.loss.requiresNonnegativeModel() && !(p.lowerBound >= 0.0)) {
    throw std::invalid_argument(std::string(toString(p.loss.kind)) +
                                " loss requires a lower bound of 0 on the factor");
  }
  const Eigen::Index rows = warmStart.rows();
  const Eigen::Index cols = warmStart.cols();
  const Eigen::Index n = warmStart.size();

  const SmoothObjective f = [&](const Vector& v, Vector& g) {
    const Matrix x = Eigen::Map<const Matrix>(v.data(), rows, cols);
    Matrix grad;
    const double value = subproblemObjective(p, x, &grad);
    g = Eigen::Map<const Vector>(grad.data(), n);
    return value;
  };
  const Vector lower = Vector::Constant(n, p.lowerBound);
  const Vector upper = Vector::Constant(n, std::numeric_limits<double>::infinity());
  const Vector x0 = Eigen::Map<const Vector>(warmStart.data(), n);

  BoundedLbfgsResult r = minimizeBounded(f, x0, lower, upper, options);
  SubproblemResult out;
  out.x = Eigen::Map<const Matrix>(r.x.data(), rows, cols);
  out.value = r.value;
  out.initialValue = r.initialValue;
  out.improved = r.value < r.initialValue;
  out.iterations = r.iterations;
  out.trace = std::move(r.trace);
  return out;
}

SubproblemResult solveFactorSubproblemGeneral(
    const LossSpec& loss, const DenseTensor& t, const KruskalFactors& k, std::size_t mode,
    double weight, double rho, const std::optional<std::pair<Matrix, Matrix>>& split,
    const std::optional<CouplingTerm>& coupling, std::optional<double> lowerBound,
    const Matrix& warmStart, const BoundedLbfgsOptions& options) {
  loss.validate();
  checkDataDomain(loss, t.values());
  const Matrix unfolded = unfold(t, mode);
  const Matrix m = coKhatriRao(k, mode);
  FactorSubproblem p{.loss = loss, .unfolded = &unfolded, .coKr = &m, .weight = weight, .rho = rho};
  if (split) p.splitTarget = split->first - split->second;
  if (coupling) {
    p.map = coupling->map;
    p.couplingTarget = coupling->map.applyDelta(coupling->delta) - coupling->dual;
  }
  if (lowerBound) p.lowerBound = *lowerBound;
  return solveFactorSubproblemGeneral(p, warmStart, options);
}

}  // namespace cmtf
