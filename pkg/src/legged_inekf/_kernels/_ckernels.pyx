# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled filter kernels; same interface and semantics as ``_pykernels``.

Matrices are row-major ``double`` buffers. Fixed sizes: 3x3 blocks, 21x21
covariance, 3x21 measurement Jacobians.
"""

from libc.math cimport sin, sqrt, isfinite, NAN
from libc.string cimport memcpy, memset

NAME = "cython"

cdef enum:
    K_ACCEPTED = 0
    K_REJECTED = 1
    K_SINGULAR = 2
    K_SKIPPED = 3
    K_NO_INPUT = 4
    K_EV_IMU = 0
    K_EV_KIN = 1
    K_EV_CAM = 2
    K_RUN_OK = 0
    K_RUN_DT_TOO_LARGE = 1
    K_RUN_DIVERGED = 2

ACCEPTED = K_ACCEPTED
REJECTED = K_REJECTED
SINGULAR = K_SINGULAR
SKIPPED = K_SKIPPED
NO_INPUT = K_NO_INPUT
EV_IMU = K_EV_IMU
EV_KIN = K_EV_KIN
EV_CAM = K_EV_CAM
RUN_OK = K_RUN_OK
RUN_DT_TOO_LARGE = K_RUN_DT_TOO_LARGE
RUN_DIVERGED = K_RUN_DIVERGED

cdef double COND_MAX = 1e12
cdef double ORTHO_TOL = 1e-9
cdef double SMALL_ANGLE = 1e-8


cdef inline void hat(const double* v, double* M) noexcept nogil:
    M[0] = 0.0
    M[1] = -v[2]
    M[2] = v[1]
    M[3] = v[2]
    M[4] = 0.0
    M[5] = -v[0]
    M[6] = -v[1]
    M[7] = v[0]
    M[8] = 0.0


cdef inline void mm3(const double* A, const double* B, double* C) noexcept nogil:
    cdef int i, j
    for i in range(3):
        for j in range(3):
            C[3 * i + j] = A[3 * i] * B[j] + A[3 * i + 1] * B[3 + j] + A[3 * i + 2] * B[6 + j]


cdef inline void mv3(const double* A, const double* v, double* out) noexcept nogil:
    cdef int i
    for i in range(3):
        out[i] = A[3 * i] * v[0] + A[3 * i + 1] * v[1] + A[3 * i + 2] * v[2]


cdef inline void mtv3(const double* A, const double* v, double* out) noexcept nogil:
    cdef int i
    for i in range(3):
        out[i] = A[i] * v[0] + A[3 + i] * v[1] + A[6 + i] * v[2]


cdef inline void transpose3(const double* A, double* At) noexcept nogil:
    cdef int i, j
    for i in range(3):
        for j in range(3):
            At[3 * j + i] = A[3 * i + j]


cdef void so3_coeffs(double theta, double* a, double* b, double* c) noexcept nogil:
    cdef double t2, s, half
    if theta < SMALL_ANGLE:
        t2 = theta * theta
        a[0] = 1.0 - t2 / 6.0
        b[0] = 0.5 - t2 / 24.0
        c[0] = 1.0 / 6.0 - t2 / 120.0
    else:
        s = sin(theta)
        half = sin(0.5 * theta)
        a[0] = s / theta
        b[0] = 2.0 * half * half / (theta * theta)
        c[0] = (theta - s) / (theta * theta * theta)


cdef void exp_jac_so3(const double* phi, double* R, double* J) noexcept nogil:
    """R = exp(phi); J = left Jacobian (skipped when J is NULL)."""
    cdef double K[9]
    cdef double K2[9]
    cdef double a, b, c
    cdef double theta = sqrt(phi[0] * phi[0] + phi[1] * phi[1] + phi[2] * phi[2])
    cdef int i
    so3_coeffs(theta, &a, &b, &c)
    hat(phi, K)
    mm3(K, K, K2)
    for i in range(9):
        R[i] = a * K[i] + b * K2[i]
        if J != NULL:
            J[i] = b * K[i] + c * K2[i]
    for i in range(3):
        R[4 * i] += 1.0
        if J != NULL:
            J[4 * i] += 1.0


cdef void reortho(double* R) noexcept nogil:
    """Bjorck iteration towards the polar factor when drift exceeds ORTHO_TOL."""
    cdef double E[9]
    cdef double Rt[9]
    cdef double T[9]
    cdef double res
    cdef int i, it
    for it in range(4):
        transpose3(R, Rt)
        mm3(Rt, R, E)
        for i in range(3):
            E[4 * i] -= 1.0
        res = 0.0
        for i in range(9):
            res += E[i] * E[i]
        if sqrt(res) <= ORTHO_TOL:
            return
        # R <- R (I - E/2)
        for i in range(9):
            E[i] = -0.5 * E[i]
        for i in range(3):
            E[4 * i] += 1.0
        mm3(R, E, T)
        memcpy(R, T, 9 * sizeof(double))


cdef void fill_phi(const double* x, const double* g, double dt, double* Phi,
                   double* vR, double* pR) noexcept nogil:
    """Closed-form exp(A dt); the pose block of A is nilpotent of order 3."""
    cdef double G[9]
    cdef double vx[9]
    cdef double px[9]
    cdef double GR[9]
    cdef const double* R = x
    cdef int i, r, c
    cdef double dt2 = dt * dt
    hat(g, G)
    hat(x + 9, vx)
    hat(x + 12, px)
    mm3(vx, R, vR)
    mm3(px, R, pR)
    mm3(G, R, GR)

    memset(Phi, 0, 441 * sizeof(double))
    for i in range(21):
        Phi[22 * i] = 1.0
    for r in range(3):
        Phi[21 * (6 + r) + 3 + r] = dt
        for c in range(3):
            Phi[21 * (3 + r) + c] = G[3 * r + c] * dt
            Phi[21 * (6 + r) + c] = G[3 * r + c] * (0.5 * dt2)
            Phi[21 * r + 9 + c] = -R[3 * r + c] * dt
            Phi[21 * (3 + r) + 9 + c] = -vR[3 * r + c] * dt - GR[3 * r + c] * (0.5 * dt2)
            Phi[21 * (6 + r) + 9 + c] = (-pR[3 * r + c] * dt - vR[3 * r + c] * (0.5 * dt2)
                                         - GR[3 * r + c] * (dt2 * dt / 6.0))
            Phi[21 * (3 + r) + 12 + c] = -R[3 * r + c] * dt
            Phi[21 * (6 + r) + 12 + c] = -R[3 * r + c] * (0.5 * dt2)


cdef void c_propagate(double* x, double* P, const double* omega, const double* acc,
                      double dt, const double* g, const double* q) noexcept nogil:
    cdef double Phi[441]
    cdef double M[441]
    cdef double T[441]
    cdef double vR[9]
    cdef double pR[9]
    cdef double Ad[81]
    cdef double C9[81]
    cdef double AC[81]
    cdef double w[3]
    cdef double a[3]
    cdef double wdt[3]
    cdef double dR[9]
    cdef double Rn[9]
    cdef double accw[3]
    cdef double v0[3]
    cdef double s
    cdef double* R = x
    cdef int i, j, k, r, c

    fill_phi(x, g, dt, Phi, vR, pR)

    # Ad_X Cov9 Ad_X^T with Cov9 = blockdiag(q0, q1, 0)
    memset(Ad, 0, 81 * sizeof(double))
    memset(C9, 0, 81 * sizeof(double))
    for r in range(3):
        for c in range(3):
            Ad[9 * r + c] = R[3 * r + c]
            Ad[9 * (3 + r) + 3 + c] = R[3 * r + c]
            Ad[9 * (6 + r) + 6 + c] = R[3 * r + c]
            Ad[9 * (3 + r) + c] = vR[3 * r + c]
            Ad[9 * (6 + r) + c] = pR[3 * r + c]
            C9[9 * r + c] = q[3 * r + c]
            C9[9 * (3 + r) + 3 + c] = q[9 + 3 * r + c]
    for i in range(9):
        for j in range(9):
            s = 0.0
            for k in range(9):
                s += Ad[9 * i + k] * C9[9 * k + j]
            AC[9 * i + j] = s

    memcpy(M, P, 441 * sizeof(double))
    for i in range(9):
        for j in range(9):
            s = 0.0
            for k in range(9):
                s += AC[9 * i + k] * Ad[9 * j + k]
            M[21 * i + j] += s * dt
    for k in range(4):
        for r in range(3):
            for c in range(3):
                M[21 * (9 + 3 * k + r) + 9 + 3 * k + c] += q[9 * (2 + k) + 3 * r + c] * dt

    # T = Phi M; rows >= 9 of Phi are identity rows, cols >= 15 of rows < 9 are zero
    for i in range(9):
        for j in range(21):
            s = 0.0
            for k in range(15):
                s += Phi[21 * i + k] * M[21 * k + j]
            T[21 * i + j] = s
    memcpy(T + 189, M + 189, 252 * sizeof(double))
    # P = T Phi^T
    for i in range(21):
        for j in range(9):
            s = 0.0
            for k in range(15):
                s += T[21 * i + k] * Phi[21 * j + k]
            M[21 * i + j] = s
        for j in range(9, 21):
            M[21 * i + j] = T[21 * i + j]
    for i in range(21):
        for j in range(21):
            P[21 * i + j] = 0.5 * (M[21 * i + j] + M[21 * j + i])

    for i in range(3):
        w[i] = omega[i] - x[15 + i]
        a[i] = acc[i] - x[18 + i]
        wdt[i] = w[i] * dt
        v0[i] = x[9 + i]
    mv3(R, a, accw)
    exp_jac_so3(wdt, dR, NULL)
    mm3(R, dR, Rn)
    reortho(Rn)
    for i in range(3):
        x[9 + i] = v0[i] + accw[i] * dt + g[i] * dt
        x[12 + i] = x[12 + i] + v0[i] * dt + 0.5 * accw[i] * dt * dt + 0.5 * g[i] * dt * dt
    memcpy(x, Rn, 9 * sizeof(double))


cdef void c_retract(double* x, const double* d) noexcept nogil:
    cdef double dR[9]
    cdef double J[9]
    cdef double Rn[9]
    cdef double t1[3]
    cdef double t2[3]
    cdef int i
    exp_jac_so3(d, dR, J)
    mm3(dR, x, Rn)
    reortho(Rn)
    mv3(dR, x + 9, t1)
    mv3(J, d + 3, t2)
    for i in range(3):
        x[9 + i] = t1[i] + t2[i]
    mv3(dR, x + 12, t1)
    mv3(J, d + 6, t2)
    for i in range(3):
        x[12 + i] = t1[i] + t2[i]
    memcpy(x, Rn, 9 * sizeof(double))
    for i in range(3):
        x[15 + i] += d[9 + i]
        x[18 + i] += d[12 + i]
        x[30 + i] += d[18 + i]
    exp_jac_so3(d + 15, dR, NULL)
    mm3(dR, x + 21, Rn)
    reortho(Rn)
    memcpy(x + 21, Rn, 9 * sizeof(double))


cdef int spd_inverse3(const double* S, double* Sinv) noexcept nogil:
    """Cholesky inverse of a 3x3 SPD matrix; 0 on success."""
    cdef double L00, L10, L11, L20, L21, L22, d
    cdef double I00, I10, I11, I20, I21, I22
    cdef double nS = 0.0
    cdef double nI = 0.0
    cdef int i
    d = S[0]
    if not (d > 0.0):
        return 1
    L00 = sqrt(d)
    L10 = S[3] / L00
    L20 = S[6] / L00
    d = S[4] - L10 * L10
    if not (d > 0.0):
        return 1
    L11 = sqrt(d)
    L21 = (S[7] - L20 * L10) / L11
    d = S[8] - L20 * L20 - L21 * L21
    if not (d > 0.0):
        return 1
    L22 = sqrt(d)
    # inverse of the lower-triangular factor
    I00 = 1.0 / L00
    I11 = 1.0 / L11
    I22 = 1.0 / L22
    I10 = -L10 * I00 / L11
    I21 = -L21 * I11 / L22
    I20 = -(L20 * I00 + L21 * I10) / L22
    # Sinv = Linv^T Linv
    Sinv[0] = I00 * I00 + I10 * I10 + I20 * I20
    Sinv[1] = I10 * I11 + I20 * I21
    Sinv[2] = I20 * I22
    Sinv[4] = I11 * I11 + I21 * I21
    Sinv[5] = I21 * I22
    Sinv[8] = I22 * I22
    Sinv[3] = Sinv[1]
    Sinv[6] = Sinv[2]
    Sinv[7] = Sinv[5]
    for i in range(9):
        nS += S[i] * S[i]
        nI += Sinv[i] * Sinv[i]
    if sqrt(nS) * sqrt(nI) > COND_MAX:
        return 1
    return 0


cdef int c_ekf_update(double* x, double* P, const double* H, const double* r,
                      const double* N, double rho, int gate, double* chi2) noexcept nogil:
    cdef double PHt[63]
    cdef double K[63]
    cdef double KN[63]
    cdef double MHt[63]
    cdef double M[441]
    cdef double S[9]
    cdef double Sinv[9]
    cdef double delta[21]
    cdef double s
    cdef int i, j, k, a

    for i in range(21):
        for a in range(3):
            s = 0.0
            for k in range(21):
                s += P[21 * i + k] * H[21 * a + k]
            PHt[3 * i + a] = s
    for a in range(3):
        for j in range(3):
            s = N[3 * a + j]
            for k in range(21):
                s += H[21 * a + k] * PHt[3 * k + j]
            S[3 * a + j] = s
    for a in range(3):
        for j in range(a + 1, 3):
            s = 0.5 * (S[3 * a + j] + S[3 * j + a])
            S[3 * a + j] = s
            S[3 * j + a] = s
    if spd_inverse3(S, Sinv) != 0:
        chi2[0] = NAN
        return K_SINGULAR
    s = 0.0
    for a in range(3):
        for j in range(3):
            s += r[a] * Sinv[3 * a + j] * r[j]
    chi2[0] = s
    if gate and s > rho:
        return K_REJECTED

    for i in range(21):
        for a in range(3):
            K[3 * i + a] = (PHt[3 * i] * Sinv[a] + PHt[3 * i + 1] * Sinv[3 + a]
                            + PHt[3 * i + 2] * Sinv[6 + a])
        delta[i] = -(K[3 * i] * r[0] + K[3 * i + 1] * r[1] + K[3 * i + 2] * r[2])
        for a in range(3):
            KN[3 * i + a] = (K[3 * i] * N[a] + K[3 * i + 1] * N[3 + a]
                             + K[3 * i + 2] * N[6 + a])
    # M = (I - K H) P, using H P = (P H^T)^T
    for i in range(21):
        for j in range(21):
            M[21 * i + j] = P[21 * i + j] - (K[3 * i] * PHt[3 * j] + K[3 * i + 1] * PHt[3 * j + 1]
                                             + K[3 * i + 2] * PHt[3 * j + 2])
    for i in range(21):
        for a in range(3):
            s = 0.0
            for k in range(21):
                s += M[21 * i + k] * H[21 * a + k]
            MHt[3 * i + a] = s
    for i in range(21):
        for j in range(21):
            M[21 * i + j] += (-(MHt[3 * i] * K[3 * j] + MHt[3 * i + 1] * K[3 * j + 1]
                                + MHt[3 * i + 2] * K[3 * j + 2])
                              + KN[3 * i] * K[3 * j] + KN[3 * i + 1] * K[3 * j + 1]
                              + KN[3 * i + 2] * K[3 * j + 2])
    for i in range(21):
        for j in range(21):
            P[21 * i + j] = 0.5 * (M[21 * i + j] + M[21 * j + i])
    c_retract(x, delta)
    return K_ACCEPTED


cdef int c_kinematic_update(double* x, double* P, const double* y, const double* cov_nf,
                            double rho, int gate, double* chi2, double* r) noexcept nogil:
    cdef double H[63]
    cdef double N[9]
    cdef double T[9]
    cdef double Rt[9]
    cdef double Ry[3]
    cdef int i
    memset(H, 0, 63 * sizeof(double))
    for i in range(3):
        H[21 * i + 3 + i] = -1.0
    mv3(x, y, Ry)
    for i in range(3):
        r[i] = Ry[i] - x[9 + i]
    mm3(x, cov_nf, T)
    transpose3(x, Rt)
    mm3(T, Rt, N)
    return c_ekf_update(x, P, H, r, N, rho, gate, chi2)


cdef void c_camera_model(const double* x, const double* wc, double* h, double* H) noexcept nogil:
    cdef double W[9]
    cdef double RcT[9]
    cdef double Rt[9]
    cdef double T[9]
    cdef double T2[9]
    cdef double X[9]
    cdef double vb[3]
    cdef double u[3]
    cdef double wu[3]
    cdef int i, j
    hat(wc, W)
    transpose3(x + 21, RcT)
    transpose3(x, Rt)
    mtv3(x, x + 9, vb)
    mtv3(x + 21, x + 30, u)
    mv3(RcT, vb, h)
    mv3(W, u, wu)
    for i in range(3):
        h[i] += wu[i]
    memset(H, 0, 63 * sizeof(double))
    mm3(RcT, Rt, T)
    for i in range(3):
        for j in range(3):
            H[21 * i + 3 + j] = T[3 * i + j]
    mm3(W, RcT, T)
    for i in range(3):
        for j in range(3):
            H[21 * i + 18 + j] = T[3 * i + j]
    hat(x + 30, X)
    mm3(T, X, T2)
    hat(vb, X)
    mm3(RcT, X, T)
    for i in range(3):
        for j in range(3):
            H[21 * i + 15 + j] = T2[3 * i + j] + T[3 * i + j]


cdef void c_camera_noise(const double* x, const double* cov_vc, const double* cov_wc,
                         int world_frame, double* N) noexcept nogil:
    cdef double U[9]
    cdef double Ut[9]
    cdef double T[9]
    cdef double T2[9]
    cdef double M[9]
    cdef double Mt[9]
    cdef double u[3]
    cdef int i, j
    mtv3(x + 21, x + 30, u)
    hat(u, U)
    transpose3(U, Ut)
    mm3(U, cov_wc, T)
    mm3(T, Ut, T2)
    for i in range(9):
        N[i] = cov_vc[i] + T2[i]
    if world_frame:
        mm3(x, x + 21, M)
        transpose3(M, Mt)
        mm3(M, N, T)
        mm3(T, Mt, N)
    for i in range(3):
        for j in range(i + 1, 3):
            T[0] = 0.5 * (N[3 * i + j] + N[3 * j + i])
            N[3 * i + j] = T[0]
            N[3 * j + i] = T[0]


cdef int c_camera_update(double* x, double* P, const double* vc, const double* wc,
                         const double* cov_vc, const double* cov_wc, int world_frame,
                         double rho, int gate, double* chi2, double* r) noexcept nogil:
    cdef double H[63]
    cdef double N[9]
    cdef double h[3]
    cdef int i
    c_camera_model(x, wc, h, H)
    for i in range(3):
        r[i] = h[i] - vc[i]
    c_camera_noise(x, cov_vc, cov_wc, world_frame, N)
    return c_ekf_update(x, P, H, r, N, rho, gate, chi2)


cdef void c_tuner_push(double* buf, int n, long long* meta, const double* sample,
                       double floor, double* C) noexcept nogil:
    cdef double mean[6]
    cdef double E[6]
    cdef int head = <int>meta[1]
    cdef int m, k, i, j, slot
    for i in range(6):
        buf[6 * head + i] = sample[i]
    meta[1] = (head + 1) % n
    if meta[0] < n:
        meta[0] += 1
    m = <int>meta[0]
    for i in range(6):
        mean[i] = 0.0
    for k in range(m):
        slot = (<int>meta[1] - m + k + n) % n
        for i in range(6):
            mean[i] += buf[6 * slot + i]
    for i in range(6):
        mean[i] /= m
    for i in range(36):
        C[i] = 0.0
    for k in range(m):
        slot = (<int>meta[1] - m + k + n) % n
        for i in range(6):
            E[i] = buf[6 * slot + i] - mean[i]
        for i in range(6):
            for j in range(6):
                C[6 * i + j] += E[i] * E[j]
    for i in range(36):
        C[i] /= m
    for i in range(6):
        C[7 * i] += floor


# ---------------------------------------------------------------- Python API

def transition_matrix(double[::1] x, double[::1] g, double dt):
    import numpy as np
    Phi = np.empty((21, 21))
    cdef double[:, ::1] Pv = Phi
    cdef double vR[9]
    cdef double pR[9]
    fill_phi(&x[0], &g[0], dt, &Pv[0, 0], vR, pR)
    return Phi


def propagate(double[::1] x, double[:, ::1] P, double[::1] omega, double[::1] acc,
              double dt, double[::1] g, double[:, :, ::1] qblocks):
    c_propagate(&x[0], &P[0, 0], &omega[0], &acc[0], dt, &g[0], &qblocks[0, 0, 0])


def retract(double[::1] x, double[::1] delta):
    c_retract(&x[0], &delta[0])


def ekf_update(double[::1] x, double[:, ::1] P, double[:, ::1] H, double[::1] r,
               double[:, ::1] N, double rho, bint gate):
    cdef double chi2
    cdef int status = c_ekf_update(&x[0], &P[0, 0], &H[0, 0], &r[0], &N[0, 0], rho, gate, &chi2)
    return status, chi2


def kinematic_update(double[::1] x, double[:, ::1] P, double[::1] y_vel,
                     double[:, ::1] cov_nf, double rho, bint gate):
    import numpy as np
    cdef double chi2
    r = np.empty(3)
    cdef double[::1] rv = r
    cdef int status = c_kinematic_update(&x[0], &P[0, 0], &y_vel[0], &cov_nf[0, 0], rho,
                                         gate, &chi2, &rv[0])
    return status, chi2, r


def camera_model(double[::1] x, double[::1] omega_c):
    import numpy as np
    h = np.empty(3)
    H = np.empty((3, 21))
    cdef double[::1] hv = h
    cdef double[:, ::1] Hv = H
    c_camera_model(&x[0], &omega_c[0], &hv[0], &Hv[0, 0])
    return h, H


def camera_noise(double[::1] x, double[:, ::1] cov_vc, double[:, ::1] cov_wc, bint world_frame):
    import numpy as np
    N = np.empty((3, 3))
    cdef double[:, ::1] Nv = N
    c_camera_noise(&x[0], &cov_vc[0, 0], &cov_wc[0, 0], world_frame, &Nv[0, 0])
    return N


def camera_update(double[::1] x, double[:, ::1] P, double[::1] v_c, double[::1] omega_c,
                  double[:, ::1] cov_vc, double[:, ::1] cov_wc, bint world_frame,
                  double rho, bint gate):
    import numpy as np
    cdef double chi2
    r = np.empty(3)
    cdef double[::1] rv = r
    cdef int status = c_camera_update(&x[0], &P[0, 0], &v_c[0], &omega_c[0], &cov_vc[0, 0],
                                      &cov_wc[0, 0], world_frame, rho, gate, &chi2, &rv[0])
    return status, chi2, r


def tuner_push(double[:, ::1] buf, long long[::1] meta, double[::1] sample, double floor):
    import numpy as np
    C = np.empty((6, 6))
    cdef double[:, ::1] Cv = C
    c_tuner_push(&buf[0, 0], buf.shape[0], &meta[0], &sample[0], floor, &Cv[0, 0])
    return C


def run_events(double[::1] x, double[:, ::1] P, double[::1] clock, double[::1] imu_hold,
               double[::1] times, signed char[::1] kinds, double[:, ::1] data,
               signed char[::1] active, double[:, :, ::1] qblocks, double[::1] g,
               double[:, ::1] cov_nf, double[:, ::1] cov_vc, double[:, ::1] cov_wc,
               double rho, bint use_camera, bint tune, bint world_frame,
               double[:, ::1] tuner_buf, long long[::1] tuner_meta, double tuner_floor,
               double dt_max, double divergence_trace,
               signed char[::1] out_status, double[::1] out_chi2, double[:, ::1] out_innov,
               double[:, ::1] out_x, double[:, ::1] out_pdiag):
    """Event-ordered filter driver; see ``_pykernels.run_events``."""
    cdef Py_ssize_t n = times.shape[0]
    cdef Py_ssize_t i
    cdef int rows = 0
    cdef int n_window = tuner_buf.shape[0]
    cdef int kind, status, k, code = 0
    cdef Py_ssize_t where = n
    cdef double t, dt, chi2, tr
    cdef double r[3]
    cdef double sample[6]
    cdef double C[36]
    cdef double cv[9]
    cdef double cw[9]
    cdef double* cov_v
    cdef double* cov_w
    cdef bint finite

    with nogil:
        for i in range(n):
            t = times[i]
            kind = kinds[i]
            if kind == K_EV_KIN and not active[i]:
                out_status[i] = K_SKIPPED
                out_chi2[i] = NAN
                continue
            dt = t - clock[0]
            if dt > 0.0 and clock[1] == 0.0:
                if kind == K_EV_IMU:
                    clock[0] = t
                    dt = 0.0
                else:
                    out_status[i] = K_NO_INPUT
                    out_chi2[i] = NAN
                    continue
            if dt > 0.0:
                if dt > dt_max:
                    code = K_RUN_DT_TOO_LARGE
                    where = i
                    break
                c_propagate(&x[0], &P[0, 0], &imu_hold[0], &imu_hold[3], dt, &g[0],
                            &qblocks[0, 0, 0])
                clock[0] = t
            if kind == K_EV_IMU:
                for k in range(6):
                    imu_hold[k] = data[i, k]
                clock[1] = 1.0
                out_status[i] = K_ACCEPTED
                out_chi2[i] = NAN
                continue
            if kind == K_EV_KIN:
                status = c_kinematic_update(&x[0], &P[0, 0], &data[i, 0], &cov_nf[0, 0], rho,
                                            1, &chi2, r)
            else:
                cov_v = &cov_vc[0, 0]
                cov_w = &cov_wc[0, 0]
                if tune:
                    for k in range(3):
                        sample[k] = data[i, 3 + k]
                        sample[3 + k] = data[i, k]
                    c_tuner_push(&tuner_buf[0, 0], n_window, &tuner_meta[0], sample,
                                 tuner_floor, C)
                    if tuner_meta[0] >= n_window:
                        for k in range(9):
                            cw[k] = C[6 * (k // 3) + (k % 3)]
                            cv[k] = C[6 * (3 + k // 3) + 3 + (k % 3)]
                        cov_v = cv
                        cov_w = cw
                if use_camera:
                    status = c_camera_update(&x[0], &P[0, 0], &data[i, 0], &data[i, 3], cov_v,
                                             cov_w, world_frame, rho, 0, &chi2, r)
                else:
                    status = K_SKIPPED
                    chi2 = NAN
                    r[0] = NAN
                    r[1] = NAN
                    r[2] = NAN
            out_status[i] = status
            out_chi2[i] = chi2
            for k in range(3):
                out_innov[i, k] = r[k]
            for k in range(33):
                out_x[rows, k] = x[k]
            tr = 0.0
            finite = True
            for k in range(21):
                out_pdiag[rows, k] = P[k, k]
                tr += P[k, k]
                if not isfinite(P[k, k]):
                    finite = False
            rows += 1
            if tr > divergence_trace or not finite:
                code = K_RUN_DIVERGED
                where = i
                break
    return code, where, rows
