#include "sensorscan/pca.hpp"

#include <Eigen/Eigenvalues>

namespace sensorscan::cluster {

Mat PcaModel::transform(const Mat& x) const {
  if (x.cols() != mean.cols()) throw ValidationError("pca transform: feature count mismatch");
  return (x.rowwise() - mean) * components;
}

Mat PcaModel::inverse_transform(const Mat& projected) const {
  Mat x = projected * components.transpose();
  x.rowwise() += mean;
  return x;
}

PcaModel fit_pca(const Mat& x, int k) {
  if (x.rows() < 2) throw ValidationError("pca: need at least 2 samples");
  if (k < 1 || k > x.cols() || k > x.rows())
    throw ValidationError("pca: " + std::to_string(k) + " components requested from " + std::to_string(x.rows()) +
                          " samples of dimension " + std::to_string(x.cols()));
  using DMat = Eigen::MatrixXd;
  PcaModel model;
  model.mean = x.colwise().mean();
  const DMat centered = (x.rowwise() - model.mean).cast<double>();
  const DMat cov = (centered.transpose() * centered) / static_cast<double>(x.rows());
  Eigen::SelfAdjointEigenSolver<DMat> solver(cov);
  if (solver.info() != Eigen::Success) throw Error("pca: eigendecomposition failed");

  const Eigen::Index f = x.cols();
  model.components.resize(f, k);
  model.explained_variance.resize(k);
  for (int j = 0; j < k; ++j) {
    const Eigen::Index src = f - 1 - j;  // eigenvalues come out ascending
    Eigen::VectorXd axis = solver.eigenvectors().col(src);
    Eigen::Index arg = 0;
    axis.cwiseAbs().maxCoeff(&arg);
    if (axis(arg) < 0) axis = -axis;
    model.components.col(j) = axis.cast<Real>();
    model.explained_variance(j) = static_cast<Real>(std::max(0.0, solver.eigenvalues()(src)));
  }
  return model;
}

}  // namespace sensorscan::cluster
