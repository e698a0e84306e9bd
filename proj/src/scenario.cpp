#include "msra/scenario.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "msra/parallel.hpp"
#include "msra/random.hpp"

namespace msra {
namespace {

constexpr double kSymmetryTol = 1e-12;
constexpr double kEigenTol = 1e-10;
constexpr std::uint16_t kFormatVersion = 1;

std::string format_number(double x) {
  std::ostringstream os;
  os << std::setprecision(12) << x;
  return os.str();
}

// Chi-square draw: sum of squared normals for integer dof, otherwise inversion.
double chi_square_draw(CounterRng& rng, double dof) {
  const double rounded = std::round(dof);
  if (rounded == dof && dof >= 1.0 && dof <= 1000.0) {
    double sum = 0.0;
    for (int i = 0; i < static_cast<int>(rounded); ++i) {
      const double z = rng.normal();
      sum += z * z;
    }
    return sum;
  }
  return dist::chi_square_quantile(rng.uniform(), dof);
}

// T = F_{target}^{-1}(F_{source}(r)), evaluated through the lower tail of |r|
// so that large draws never round to a probability of exactly one.
double remap_student(double r, double source_dof, double target_dof) {
  if (source_dof == target_dof) return r;
  const double lower = std::max(dist::student_cdf(-std::abs(r), source_dof), std::numeric_limits<double>::min());
  const double magnitude = -dist::student_quantile(lower, target_dof);
  return r < 0.0 ? -magnitude : magnitude;
}

void put_bytes(std::string& out, const void* src, std::size_t size) {
  const auto* p = static_cast<const char*>(src);
  if constexpr (std::endian::native == std::endian::little) {
    out.append(p, size);
  } else {
    for (std::size_t i = 0; i < size; ++i) out.push_back(p[size - 1 - i]);
  }
}

template <class T>
void put(std::string& out, T value) {
  put_bytes(out, &value, sizeof(T));
}

class ByteReader {
 public:
  explicit ByteReader(const std::string& bytes) : bytes_(bytes) {}

  template <class T>
  T get() {
    if (pos_ + sizeof(T) > bytes_.size()) throw IoError("scenario file truncated at byte " + std::to_string(pos_));
    T value;
    char buf[sizeof(T)];
    if constexpr (std::endian::native == std::endian::little) {
      std::memcpy(buf, bytes_.data() + pos_, sizeof(T));
    } else {
      for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = bytes_[pos_ + sizeof(T) - 1 - i];
    }
    std::memcpy(&value, buf, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string get_string(std::size_t size) {
    if (pos_ + size > bytes_.size()) throw IoError("scenario file truncated in model tag");
    std::string s = bytes_.substr(pos_, size);
    pos_ += size;
    return s;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    const auto first = cell.find_first_not_of(" \t\r");
    const auto last = cell.find_last_not_of(" \t\r");
    cells.push_back(first == std::string::npos ? std::string() : cell.substr(first, last - first + 1));
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace

ScenarioSet::ScenarioSet(RowMatrix data, std::uint64_t seed, std::string model_tag)
    : data_(std::move(data)), seed_(seed), model_tag_(std::move(model_tag)) {
  require(data_.rows() >= 1 && data_.cols() >= 1, "scenario set must have at least one row and one column");
  if (!data_.allFinite()) {
    for (Eigen::Index i = 0; i < data_.rows(); ++i)
      for (Eigen::Index j = 0; j < data_.cols(); ++j)
        if (!std::isfinite(data_(i, j)))
          throw InputError("non-finite scenario entry at row " + std::to_string(i) + ", column " + std::to_string(j));
  }
}

void ScenarioSet::set_labels(std::vector<std::string> labels) {
  require(labels.empty() || labels.size() == cols(), "label count does not match scenario columns");
  labels_ = std::move(labels);
}

void GaussianModel::validate() const {
  const auto d = mean.size();
  require(d >= 1, "gaussian model needs at least one component");
  require(covariance.rows() == d && covariance.cols() == d, "covariance must be " + std::to_string(d) + "x" +
                                                                 std::to_string(d));
  require(mean.allFinite() && covariance.allFinite(), "gaussian model parameters must be finite");
  const double asym = (covariance - covariance.transpose()).cwiseAbs().maxCoeff();
  require(asym <= kSymmetryTol, "covariance is not symmetric (max asymmetry " + format_number(asym) + ")");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(covariance, Eigen::EigenvaluesOnly);
  const double lowest = eig.eigenvalues().minCoeff();
  if (lowest < -kEigenTol)
    throw InputError("covariance is not positive semi-definite: eigenvalue " + format_number(lowest) +
                     " is below -1e-10");
}

CovarianceFactor factor_covariance(const Matrix& covariance) {
  CovarianceFactor out;
  Eigen::LLT<Matrix> llt(covariance);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(covariance);
  const Vector values = eig.eigenvalues();
  if (llt.info() == Eigen::Success && values.minCoeff() > kEigenTol) {
    out.factor = llt.matrixL();
    return out;
  }
  Vector clipped = values;
  for (Eigen::Index i = 0; i < clipped.size(); ++i) {
    if (clipped(i) < -kEigenTol)
      throw InputError("covariance is not positive semi-definite: eigenvalue " + format_number(clipped(i)) +
                       " is below -1e-10");
    if (clipped(i) < 0.0) {
      out.diagnostics.push_back("clipped eigenvalue " + format_number(clipped(i)) + " to 0");
      clipped(i) = 0.0;
    }
  }
  out.factor = eig.eigenvectors() * clipped.cwiseSqrt().asDiagonal();
  return out;
}

void StudentCopulaModel::validate() const {
  const auto u = correlation.rows();
  require(u >= 1 && correlation.cols() == u, "copula correlation must be square and non-empty");
  require(correlation.allFinite(), "copula correlation must be finite");
  for (Eigen::Index i = 0; i < u; ++i)
    require(std::abs(correlation(i, i) - 1.0) <= 1e-12, "copula correlation must have unit diagonal");
  GaussianModel{Vector::Zero(u), correlation}.validate();
  require(copula_dof > 0.0, "copula degrees of freedom must be positive");
  require(marginal_dof.size() == u && fudge.size() == u && spot.size() == u,
          "marginal_dof, fudge and spot must have one entry per underlying");
  for (Eigen::Index i = 0; i < u; ++i) {
    require(marginal_dof(i) > 0.0, "marginal degrees of freedom must be positive");
    require(fudge(i) > 0.0, "fudge coefficients must be positive");
    require(spot(i) != 0.0, "spot price of underlying " + std::to_string(i) + " is zero");
    require(spot(i) > 0.0, "spot prices must be positive");
  }
  require(positions.matrix.cols() == u, "positions must have one column per underlying");
  require(positions.matrix.rows() >= 1, "positions must have at least one member");
  for (Eigen::Index j = 0; j < u; ++j) {
    const double sum = positions.matrix.col(j).sum();
    if (std::abs(sum) > 1e-9) {
      const std::string name = j < static_cast<Eigen::Index>(positions.tickers.size())
                                   ? positions.tickers[static_cast<std::size_t>(j)]
                                   : std::to_string(j);
      throw InputError("column " + name + " sums to " + format_number(sum));
    }
  }
}

ScenarioSet simulate_gaussian(const GaussianModel& model, std::size_t n, std::uint64_t seed) {
  model.validate();
  require(n >= 1, "scenario count must be positive");
  const auto factor = factor_covariance(model.covariance);
  const auto d = model.mean.size();
  RowMatrix data(static_cast<Eigen::Index>(n), d);
  const std::size_t blocks = (n + parallel::kBlockRows - 1) / parallel::kBlockRows;
  parallel::for_blocks(blocks, [&](std::size_t b) {
    CounterRng rng(seed, b);
    Vector z(d);
    const std::size_t end = std::min(n, (b + 1) * parallel::kBlockRows);
    for (std::size_t s = b * parallel::kBlockRows; s < end; ++s) {
      for (Eigen::Index j = 0; j < d; ++j) z(j) = rng.normal();
      data.row(static_cast<Eigen::Index>(s)) = (model.mean + factor.factor * z).transpose();
    }
  });
  std::ostringstream tag;
  tag << "gaussian(d=" << d << ")";
  ScenarioSet set(std::move(data), seed, tag.str());
  for (const auto& msg : factor.diagnostics) set.add_diagnostic(msg);
  return set;
}

RowMatrix simulate_copula_marginals(const StudentCopulaModel& model, std::size_t n, std::uint64_t seed) {
  model.validate();
  require(n >= 1, "scenario count must be positive");
  const auto factor = factor_covariance(model.correlation);
  const auto u = static_cast<Eigen::Index>(model.underlyings());
  RowMatrix draws(static_cast<Eigen::Index>(n), u);
  const std::size_t blocks = (n + parallel::kBlockRows - 1) / parallel::kBlockRows;
  parallel::for_blocks(blocks, [&](std::size_t b) {
    CounterRng rng(seed, b);
    Vector z(u);
    const std::size_t end = std::min(n, (b + 1) * parallel::kBlockRows);
    for (std::size_t s = b * parallel::kBlockRows; s < end; ++s) {
      for (Eigen::Index j = 0; j < u; ++j) z(j) = rng.normal();
      const Vector g = factor.factor * z;
      const double xi = chi_square_draw(rng, model.copula_dof);
      const double scale = std::sqrt(model.copula_dof / xi);
      for (Eigen::Index j = 0; j < u; ++j)
        draws(static_cast<Eigen::Index>(s), j) = remap_student(scale * g(j), model.copula_dof, model.marginal_dof(j));
    }
  });
  return draws;
}

ScenarioSet simulate_student_copula(const StudentCopulaModel& model, std::size_t n, std::uint64_t seed) {
  const RowMatrix t = simulate_copula_marginals(model, n, seed);
  const Vector move_scale = model.fudge.cwiseProduct(model.spot);
  const RowMatrix moves = t * move_scale.asDiagonal();
  RowMatrix losses = -moves * model.positions.matrix.transpose();
  std::ostringstream tag;
  tag << "student_copula(members=" << model.members() << ",underlyings=" << model.underlyings()
      << ",nu=" << model.copula_dof << ")";
  ScenarioSet set(std::move(losses), seed, tag.str());
  if (model.positions.members.size() == model.members()) set.set_labels(model.positions.members);
  if (model.copula_dof <= 2.0) set.add_diagnostic("copula dof <= 2: infinite variance of the copula driver");
  for (Eigen::Index i = 0; i < model.marginal_dof.size(); ++i)
    if (model.marginal_dof(i) <= 2.0)
      set.add_diagnostic("marginal dof of underlying " + std::to_string(i) + " <= 2: infinite variance");
  return set;
}

StudentCopulaModel synthetic_book(std::size_t members, std::size_t underlyings, std::uint64_t seed,
                                  double copula_dof) {
  require(members >= 2 && underlyings >= 1, "synthetic book needs at least two members and one underlying");
  const auto m = static_cast<Eigen::Index>(members);
  const auto u = static_cast<Eigen::Index>(underlyings);
  StudentCopulaModel model;
  model.correlation = Matrix::Constant(u, u, 0.6);
  model.correlation.diagonal().setOnes();
  model.copula_dof = copula_dof;
  model.marginal_dof.resize(u);
  for (Eigen::Index i = 0; i < u; ++i)
    model.marginal_dof(i) = u == 1 ? 6.0 : 4.0 + 4.0 * static_cast<double>(i) / static_cast<double>(u - 1);
  model.fudge = Vector::Constant(u, 0.02);
  model.spot = Vector::Constant(u, 100.0);
  CounterRng rng(seed, 0xB00C);
  model.positions.matrix = Matrix::Zero(m, u);
  for (Eigen::Index k = 0; k + 1 < m; ++k)
    for (Eigen::Index j = 0; j < u; ++j)
      model.positions.matrix(k, j) = static_cast<double>(static_cast<int>(rng.next_u64() % 41) - 20);
  for (Eigen::Index j = 0; j < u; ++j)
    model.positions.matrix(m - 1, j) = -model.positions.matrix.col(j).head(m - 1).sum();
  for (std::size_t k = 0; k < members; ++k) model.positions.members.push_back("CM" + std::to_string(k + 1));
  for (std::size_t j = 0; j < underlyings; ++j) model.positions.tickers.push_back("U" + std::to_string(j + 1));
  return model;
}

Positions parse_positions(const std::string& csv_text) {
  std::istringstream in(csv_text);
  std::string line;
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    rows.push_back(split_csv_line(line));
  }
  if (rows.empty()) throw PositionsParseError(0, 0, "positions file is empty");
  const auto& header = rows.front();
  if (header.size() < 2) throw PositionsParseError(1, 0, "header needs a label column and at least one ticker");
  if (rows.size() < 2) throw PositionsParseError(0, 0, "positions file has no member rows");
  Positions p;
  p.tickers.assign(header.begin() + 1, header.end());
  const auto u = static_cast<Eigen::Index>(p.tickers.size());
  p.matrix = Matrix::Zero(static_cast<Eigen::Index>(rows.size() - 1), u);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& cells = rows[r];
    if (cells.size() != header.size())
      throw PositionsParseError(r + 1, 0, "row " + std::to_string(r + 1) + " has " + std::to_string(cells.size()) +
                                              " cells, expected " + std::to_string(header.size()));
    p.members.push_back(cells[0]);
    for (std::size_t c = 1; c < cells.size(); ++c) {
      const std::string& cell = cells[c];
      std::size_t used = 0;
      double value = 0.0;
      try {
        value = std::stod(cell, &used);
      } catch (...) {
        used = 0;
      }
      if (cell.empty() || used != cell.size() || !std::isfinite(value))
        throw PositionsParseError(r + 1, c + 1, "non-numeric cell '" + cell + "' at row " + std::to_string(r + 1) +
                                                    ", column " + std::to_string(c + 1));
      p.matrix(static_cast<Eigen::Index>(r - 1), static_cast<Eigen::Index>(c - 1)) = value;
    }
  }
  for (Eigen::Index j = 0; j < u; ++j) {
    const double sum = p.matrix.col(j).sum();
    if (std::abs(sum) > 1e-9)
      throw PositionsParseError(0, static_cast<std::size_t>(j) + 2,
                                "column " + p.tickers[static_cast<std::size_t>(j)] + " sums to " + format_number(sum));
  }
  return p;
}

Positions load_positions(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open positions file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_positions(ss.str());
}

std::string serialize_scenarios(const ScenarioSet& set) {
  std::string out;
  out.reserve(34 + set.rows() * set.cols() * 8 + set.model_tag().size());
  out.append("MSRA", 4);
  put<std::uint16_t>(out, kFormatVersion);
  put<std::uint64_t>(out, set.rows());
  put<std::uint64_t>(out, set.cols());
  const double* p = set.data().data();
  for (std::size_t i = 0; i < set.rows() * set.cols(); ++i) put<double>(out, p[i]);
  put<std::uint64_t>(out, set.seed());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(set.model_tag().size()));
  out.append(set.model_tag());
  return out;
}

ScenarioSet deserialize_scenarios(const std::string& bytes) {
  if (bytes.size() < 4 || bytes.compare(0, 4, "MSRA") != 0) throw IoError("not a scenario file (bad magic)");
  const std::string body = bytes.substr(4);
  ByteReader reader(body);
  const auto version = reader.get<std::uint16_t>();
  if (version != kFormatVersion) throw IoError("unsupported scenario file version " + std::to_string(version));
  const auto n = reader.get<std::uint64_t>();
  const auto d = reader.get<std::uint64_t>();
  if (n == 0 || d == 0 || n > reader.remaining() / 8 / d) throw IoError("scenario file header is inconsistent");
  RowMatrix data(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  double* p = data.data();
  for (std::uint64_t i = 0; i < n * d; ++i) p[i] = reader.get<double>();
  const auto seed = reader.get<std::uint64_t>();
  const auto tag_len = reader.get<std::uint32_t>();
  std::string tag = reader.get_string(tag_len);
  try {
    return ScenarioSet(std::move(data), seed, std::move(tag));
  } catch (const InputError& e) {
    throw IoError(std::string("corrupt scenario file: ") + e.what());
  }
}

void write_scenarios(const ScenarioSet& set, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write scenario file " + path.string());
  const std::string bytes = serialize_scenarios(set);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing scenario file " + path.string());
}

ScenarioSet read_scenarios(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open scenario file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_scenarios(ss.str());
}

void write_scenarios_csv(const ScenarioSet& set, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (std::size_t j = 0; j < set.cols(); ++j) {
    if (j) out << ',';
    out << (set.labels().empty() ? "X" + std::to_string(j + 1) : set.labels()[j]);
  }
  out << '\n' << std::setprecision(17);
  for (std::size_t i = 0; i < set.rows(); ++i) {
    for (std::size_t j = 0; j < set.cols(); ++j) {
      if (j) out << ',';
      out << set.data()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<ColumnSummary> summarize(const ScenarioSet& set) {
  std::vector<ColumnSummary> out;
  const auto& x = set.data();
  const double n = static_cast<double>(set.rows());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double mean = x.col(j).mean();
    const double var = set.rows() > 1 ? (x.col(j).array() - mean).square().sum() / (n - 1.0) : 0.0;
    out.push_back({mean, std::sqrt(var), x.col(j).minCoeff(), x.col(j).maxCoeff()});
  }
  return out;
}

double empirical_quantile(std::vector<double> values, double level) {
  require(!values.empty(), "quantile of an empty sample");
  require(level >= 0.0 && level <= 1.0, "quantile level must lie in [0, 1]");
  const double h = static_cast<double>(values.size() - 1) * level;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(lo), values.end());
  const double a = values[lo];
  if (hi == lo) return a;
  const double b = *std::min_element(values.begin() + static_cast<std::ptrdiff_t>(lo) + 1, values.end());
  return a + (h - static_cast<double>(lo)) * (b - a);
}

}  // namespace msra
