#pragma once

#include "trf4d/common.hpp"

namespace trf4d {

inline constexpr int kShDim = 16;

// Real spherical harmonics, first 4 bands (l = 0..3), (l, m) lexicographic
// order with m = -l..l, Condon-Shortley phase omitted:
//
//   Y_0^0           = sqrt(1/4pi)
//   Y_1^{-1,0,1}    = sqrt(3/4pi) * {y, z, x}
//   Y_2^{-2..2}     = sqrt(15/4pi)*{xy, yz}, sqrt(5/16pi)*(3z^2-1),
//                     sqrt(15/4pi)*xz, sqrt(15/16pi)*(x^2-y^2)
//   Y_3^{-3..3}     = sqrt(35/32pi)*y(3x^2-y^2), sqrt(105/4pi)*xyz,
//                     sqrt(21/32pi)*y(5z^2-1), sqrt(7/16pi)*z(5z^2-3),
//                     sqrt(21/32pi)*x(5z^2-1), sqrt(105/16pi)*z(x^2-y^2),
//                     sqrt(35/32pi)*x(x^2-3y^2)

template <typename S>
inline void sh_encode(const Vec3& d_in, S* out) {
    double n = d_in.norm();
    require(n > 1e-12, "sh_encode: zero direction");
    require(std::abs(n - 1.0) < 1e-4, "sh_encode: direction must be unit length");
    Vec3 d = d_in / n;
    double x = d.x, y = d.y, z = d.z;
    double xx = x * x, yy = y * y, zz = z * z;

    out[0] = S(0.28209479177387814);

    out[1] = S(0.4886025119029199 * y);
    out[2] = S(0.4886025119029199 * z);
    out[3] = S(0.4886025119029199 * x);

    out[4] = S(1.0925484305920792 * x * y);
    out[5] = S(1.0925484305920792 * y * z);
    out[6] = S(0.31539156525252005 * (3.0 * zz - 1.0));
    out[7] = S(1.0925484305920792 * x * z);
    out[8] = S(0.5462742152960396 * (xx - yy));

    out[9] = S(0.5900435899266435 * y * (3.0 * xx - yy));
    out[10] = S(2.890611442640554 * x * y * z);
    out[11] = S(0.4570457994644658 * y * (5.0 * zz - 1.0));
    out[12] = S(0.3731763325901154 * z * (5.0 * zz - 3.0));
    out[13] = S(0.4570457994644658 * x * (5.0 * zz - 1.0));
    out[14] = S(1.445305721320277 * z * (xx - yy));
    out[15] = S(0.5900435899266435 * x * (xx - 3.0 * yy));
}

}  // namespace trf4d
