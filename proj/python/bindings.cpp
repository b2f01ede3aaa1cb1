#include "phicascade/blowup.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>

namespace py = pybind11;
using namespace phicascade;

namespace {

DyadicRational dy(const std::string& s) { return DyadicRational::parse(s); }

std::vector<DyadicRational> dys(const std::vector<std::string>& xs) {
  std::vector<DyadicRational> out;
  out.reserve(xs.size());
  for (const auto& s : xs) out.push_back(dy(s));
  return out;
}

double ln(const LogPositive& v) { return v.ln_double(); }

// Holds the phi configuration (and its integral cache) shared by every call on one object.
class Cascade {
 public:
  explicit Cascade(double quad_rel_tol, double rel_gap, int max_gen, int threads)
      : cfg_(make_phi_config(quad_rel_tol, std::make_shared<PhiCache>())), opt_{rel_gap, max_gen, threads} {}

  double ln_phi_integral(const std::string& a, const std::string& b) const {
    return ln(log_phi_integral(IntervalD(dy(a), dy(b)), cfg_));
  }

  double ln_g_ratio(double C, double eps) const { return static_cast<double>(g_ratio(C, eps, cfg_).ln_G); }

  py::dict interval(const std::string& x, int generation) const {
    const ConstructionInterval I = locate(dy(x), generation, cfg_);
    py::dict d;
    d["index"] = I.index.path();
    d["left"] = I.extent.left().to_string();
    d["right"] = I.extent.right().to_string();
    d["generation"] = I.generation;
    d["ln_mass"] = ln(I.ln_mass);
    return d;
  }

  py::tuple mass(const std::string& a, const std::string& b) const {
    const MassEnclosure e = mass_of_interval(IntervalD(dy(a), dy(b)), opt_.rel_gap, opt_.max_gen, cfg_);
    return py::make_tuple(ln(e.lower), ln(e.upper), e.converged);
  }

  std::vector<std::string> sample(std::uint64_t seed, int depth, int n) const {
    std::vector<std::string> out;
    for (const auto& p : sample_mu(MuSampler{seed, depth}, n, cfg_)) out.push_back(p.x.to_string());
    return out;
  }

  std::vector<py::dict> doubling(const std::string& x, const std::vector<std::string>& scales) const {
    std::vector<py::dict> out;
    for (const auto& r : doubling_scan(dy(x), dys(scales), cfg_, opt_)) {
      py::dict d;
      d["r"] = r.r.to_string();
      d["ln_ratio2"] = static_cast<double>(r.ln_ratio2);
      d["ln_ratio17"] = static_cast<double>(r.ln_ratio17);
      d["gap_ok"] = r.gap_ok;
      out.push_back(std::move(d));
    }
    return out;
  }

  py::dict nondoubling(const std::string& schedule) const {
    const NonDoublingPoint pt = build_nondoubling_point(parse_schedule(schedule), cfg_);
    std::vector<py::dict> rows;
    for (const auto& r : nondoubling_scan(pt, cfg_, opt_)) {
      py::dict d;
      d["i"] = r.witness.entry.i;
      d["k"] = r.witness.entry.k;
      d["band_ok"] = r.witness.band_ok;
      d["lambda"] = r.lambda;
      d["ln_ratio17"] = static_cast<double>(r.scan.ln_ratio17);
      d["bound_ok"] = r.bound_ok;
      rows.push_back(std::move(d));
    }
    py::dict out;
    out["x"] = pt.x.to_string();
    out["rows"] = rows;
    return out;
  }

  py::dict porosity(const std::string& x, const std::string& r, double eps, int grid_gen) const {
    const PorosityResult res = porosity_search(dy(x), dy(r), eps, grid_gen, cfg_, opt_);
    py::dict d;
    d["delta"] = res.delta();
    d["y"] = res.y.to_string();
    d["verified"] = !res.delta_exact.is_zero() && verify_porosity(res, cfg_, opt_);
    return d;
  }

  py::dict profile(const std::string& x, const std::string& r, int m, const std::string& delta) const {
    const DensityProfile p = density_profile(dy(x), dy(r), DyadicRational(1), m, dy(delta), cfg_, opt_);
    std::vector<double> z, density;
    std::vector<bool> near_E;
    for (const auto& pt : p.points) {
      z.push_back(pt.z.to_double());
      density.push_back(pt.density);
      near_E.push_back(pt.near_E);
    }
    py::dict d;
    d["z"] = z;
    d["density"] = density;
    d["near_E"] = near_E;
    d["E"] = p.E_normalized;
    d["K"] = p.scale.K ? py::cast(*p.scale.K) : py::none();
    d["flatness"] = profile_flatness(p).ratio;
    return d;
  }

 private:
  PhiConfig cfg_;
  EvalOptions opt_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Exact construction and analysis of a phi-weighted dyadic cascade measure";
  m.def("normalization_constant", [](double tol) { return normalization_constant(tol).value(); },
        py::arg("quad_rel_tol") = 1e-12);
  m.def("length_exponent", &length_exponent);
  m.def("canonical", [](const std::string& s) { return dy(s).to_string(); },
        "Canonical m*2^e spelling of a dyadic literal.");

  py::class_<Cascade>(m, "Cascade")
      .def(py::init<double, double, int, int>(), py::arg("quad_rel_tol") = 1e-12, py::arg("rel_gap") = 1e-8,
           py::arg("max_gen") = 18, py::arg("threads") = 1)
      .def("ln_phi_integral", &Cascade::ln_phi_integral)
      .def("ln_g_ratio", &Cascade::ln_g_ratio)
      .def("interval", &Cascade::interval, py::arg("x"), py::arg("generation"))
      .def("mass", &Cascade::mass, "(ln lower, ln upper, converged) for mu([a, b)).")
      .def("sample", &Cascade::sample, py::arg("seed"), py::arg("depth"), py::arg("n"))
      .def("doubling", &Cascade::doubling)
      .def("nondoubling", &Cascade::nondoubling, py::arg("schedule"))
      .def("porosity", &Cascade::porosity, py::arg("x"), py::arg("r"), py::arg("eps") = 1e-3,
           py::arg("grid_gen") = 4)
      .def("profile", &Cascade::profile, py::arg("x"), py::arg("r"), py::arg("m") = 257,
           py::arg("delta") = "2^-6");
}
