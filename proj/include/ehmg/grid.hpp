#pragma once

// Staggered (MAC) grid layout and complex field storage.
//
// A grid of `dims` cells per axis carries one cell-centered pressure field
// and Dim face-centered displacement fields; component k lives on the faces
// orthogonal to axis k, so its index range along axis k is dims[k]+1.
// All fields are stored axis-0-fastest (Fortran order).

#include <array>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ehmg {

template <int Dim> using Idx = std::array<int, std::size_t(Dim)>;

template <int Dim> struct Box {
  Idx<Dim> dims{};

  std::int64_t size() const {
    std::int64_t s = 1;
    for (int d : dims) s *= d;
    return s;
  }
  bool contains(const Idx<Dim>& i) const {
    for (int a = 0; a < Dim; ++a)
      if (i[a] < 0 || i[a] >= dims[a]) return false;
    return true;
  }
  // Linear index, axis 0 fastest.
  std::int64_t lin(const Idx<Dim>& i) const {
    std::int64_t r = i[Dim - 1];
    for (int a = Dim - 2; a >= 0; --a) r = r * dims[a] + i[a];
    return r;
  }
  Idx<Dim> unlin(std::int64_t r) const {
    Idx<Dim> i{};
    for (int a = 0; a < Dim; ++a) {
      i[a] = int(r % dims[a]);
      r /= dims[a];
    }
    return i;
  }
};

// Visits every index of `box`, axis 0 fastest (matches storage order).
template <int Dim, class F> void for_each(const Box<Dim>& box, F&& f) {
  if constexpr (Dim == 2) {
    Idx<2> i;
    for (i[1] = 0; i[1] < box.dims[1]; ++i[1])
      for (i[0] = 0; i[0] < box.dims[0]; ++i[0]) f(i);
  } else {
    Idx<3> i;
    for (i[2] = 0; i[2] < box.dims[2]; ++i[2])
      for (i[1] = 0; i[1] < box.dims[1]; ++i[1])
        for (i[0] = 0; i[0] < box.dims[0]; ++i[0]) f(i);
  }
}

template <int Dim> struct StaggeredGrid {
  Idx<Dim> dims{};
  double h = 0;  // uniform mesh width, all axes

  StaggeredGrid() = default;
  StaggeredGrid(Idx<Dim> d, double h_) : dims(d), h(h_) { validate(); }

  void validate() const {
    static_assert(Dim == 2 || Dim == 3, "2D or 3D only");
    if (!(h > 0)) throw std::invalid_argument("grid: h must be positive");
    for (int a = 0; a < Dim; ++a)
      if (dims[a] < 2) throw std::invalid_argument("grid: need >= 2 cells per axis");
  }

  Box<Dim> cell_box() const { return Box<Dim>{dims}; }
  Box<Dim> face_box(int axis) const {
    Box<Dim> b{dims};
    b.dims[axis] += 1;
    return b;
  }
  // Edges staggered in both axes a and b (2D: grid nodes).
  Box<Dim> edge_box(int a, int b) const {
    Box<Dim> bx{dims};
    bx.dims[a] += 1;
    bx.dims[b] += 1;
    return bx;
  }

  std::int64_t n_cells() const { return cell_box().size(); }
  std::int64_t n_faces(int axis) const { return face_box(axis).size(); }
  std::int64_t n_dofs() const {
    std::int64_t n = n_cells();
    for (int a = 0; a < Dim; ++a) n += n_faces(a);
    return n;
  }
};

// One mixed-system state: Dim face fields (displacement) + cell field (pressure).
// comp[k], k < Dim are the displacement components; comp[Dim] is the pressure.
template <class Real, int Dim> struct FieldVector {
  using C = std::complex<Real>;
  std::array<std::vector<C>, Dim + 1> comp;

  FieldVector() = default;
  explicit FieldVector(const StaggeredGrid<Dim>& g) {
    for (int k = 0; k < Dim; ++k) comp[k].assign(size_t(g.n_faces(k)), C(0));
    comp[Dim].assign(size_t(g.n_cells()), C(0));
  }

  std::vector<C>& u(int k) { return comp[k]; }
  const std::vector<C>& u(int k) const { return comp[k]; }
  std::vector<C>& p() { return comp[Dim]; }
  const std::vector<C>& p() const { return comp[Dim]; }

  std::int64_t size() const {
    std::int64_t n = 0;
    for (auto& c : comp) n += std::int64_t(c.size());
    return n;
  }
  void set_zero() {
    for (auto& c : comp) std::fill(c.begin(), c.end(), C(0));
  }
};

template <class Real, int Dim>
void axpy(std::complex<Real> a, const FieldVector<Real, Dim>& x, FieldVector<Real, Dim>& y) {
  for (int c = 0; c <= Dim; ++c)
    for (size_t i = 0; i < x.comp[c].size(); ++i) y.comp[c][i] += a * x.comp[c][i];
}

template <class Real, int Dim>
void scal(std::complex<Real> a, FieldVector<Real, Dim>& x) {
  for (auto& c : x.comp)
    for (auto& v : c) v *= a;
}

// Conjugate-linear in the first argument.
template <class Real, int Dim>
std::complex<Real> dot(const FieldVector<Real, Dim>& x, const FieldVector<Real, Dim>& y) {
  std::complex<double> s(0, 0);  // accumulate in double even for float fields
  for (int c = 0; c <= Dim; ++c)
    for (size_t i = 0; i < x.comp[c].size(); ++i)
      s += std::complex<double>(std::conj(x.comp[c][i])) * std::complex<double>(y.comp[c][i]);
  return std::complex<Real>(Real(s.real()), Real(s.imag()));
}

template <class Real, int Dim> double norm(const FieldVector<Real, Dim>& x) {
  double s = 0;
  for (auto& c : x.comp)
    for (auto& v : c) s += double(v.real()) * v.real() + double(v.imag()) * v.imag();
  return std::sqrt(s);
}

// Unit impulse scaled by the inverse cell volume, so that the discrete
// inner product against any field approximates point evaluation.
// component: 0..Dim-1 selects a displacement face field, Dim the pressure.
template <class Real, int Dim>
FieldVector<Real, Dim> make_point_source(const StaggeredGrid<Dim>& g, int component,
                                         const Idx<Dim>& index) {
  FieldVector<Real, Dim> f(g);
  Box<Dim> box = component < Dim ? g.face_box(component) : g.cell_box();
  if (!box.contains(index)) throw std::out_of_range("point source index outside grid");
  double vol = 1;
  for (int a = 0; a < Dim; ++a) vol *= g.h;
  f.comp[size_t(component)][size_t(box.lin(index))] = std::complex<Real>(Real(1.0 / vol), 0);
  return f;
}

// Index of the cell/face at the middle of the top row (shallowest layer of
// the last axis), where experiment sources are placed by default.
template <int Dim> Idx<Dim> middle_of_top_row(const StaggeredGrid<Dim>& g) {
  Idx<Dim> i{};
  for (int a = 0; a + 1 < Dim; ++a) i[a] = g.dims[a] / 2;
  i[Dim - 1] = 0;
  return i;
}

}  // namespace ehmg
