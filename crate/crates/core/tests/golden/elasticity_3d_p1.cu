// multi-level tiling: TQ=4 Ter=2 Tec=[2] Tqr=6 Tqc=4 Nc=21 Nwi=3
// d=3 Q=4 n_W=12 N_w=9 trial [v0: n=4 terms=9]

typedef double real_t;

#define DIM 3
#define Q 4
#define n_W 12
#define N_w 9
#define N_COORD 4
#define n_v0 4
#define N_DU 9
#define N_c 21
#define N_WI 3
#define T_Q 4
#define T_e_r 2
#define T_e_c_v0 2
#define T_q_r 6
#define T_q_c 4
#define S_e 1
#define S_q 2

__device__ inline void geometry(const real_t *J, real_t *geo) {
    for (int i = 0; i < 18; ++i) geo[i] = 0;
    for (int i = 0; i < 9; ++i) geo[i] = J[i];
    geo[9] = J[4] * J[8] - J[5] * J[7];
    geo[10] = J[7] * J[2] - J[8] * J[1];
    geo[11] = J[1] * J[5] - J[2] * J[4];
    geo[12] = J[5] * J[6] - J[3] * J[8];
    geo[13] = J[8] * J[0] - J[6] * J[2];
    geo[14] = J[2] * J[3] - J[0] * J[5];
    geo[15] = J[3] * J[7] - J[4] * J[6];
    geo[16] = J[6] * J[1] - J[7] * J[0];
    geo[17] = J[0] * J[4] - J[1] * J[3];
    geo[18] = J[0] * geo[9] + J[1] * geo[12] + J[2] * geo[15];
    geo[19] = 1 / geo[18];
}

__device__ inline void pointwise(const real_t *du, const real_t *geo, const real_t *X, real_t w, real_t *ev) {
    ev[0] = (w * ((geo[9] * ((3.0 * (geo[19] * ((du[0] * geo[9]) + (du[1] * geo[12]) + (du[2] * geo[15])))) + (1.0 * (geo[19] * ((du[3] * geo[10]) + (du[4] * geo[13]) + (du[5] * geo[16])))) + (1.0 * (geo[19] * ((du[6] * geo[11]) + (du[7] * geo[14]) + (du[8] * geo[17])))))) + (geo[10] * ((1.0 * (geo[19] * ((du[0] * geo[10]) + (du[1] * geo[13]) + (du[2] * geo[16])))) + (1.0 * (geo[19] * ((du[3] * geo[9]) + (du[4] * geo[12]) + (du[5] * geo[15])))))) + (geo[11] * ((1.0 * (geo[19] * ((du[0] * geo[11]) + (du[1] * geo[14]) + (du[2] * geo[17])))) + (1.0 * (geo[19] * ((du[6] * geo[9]) + (du[7] * geo[12]) + (du[8] * geo[15]))))))));
    ev[1] = (w * ((geo[12] * ((3.0 * (geo[19] * ((du[0] * geo[9]) + (du[1] * geo[12]) + (du[2] * geo[15])))) + (1.0 * (geo[19] * ((du[3] * geo[10]) + (du[4] * geo[13]) + (du[5] * geo[16])))) + (1.0 * (geo[19] * ((du[6] * geo[11]) + (du[7] * geo[14]) + (du[8] * geo[17])))))) + (geo[13] * ((1.0 * (geo[19] * ((du[0] * geo[10]) + (du[1] * geo[13]) + (du[2] * geo[16])))) + (1.0 * (geo[19] * ((du[3] * geo[9]) + (du[4] * geo[12]) + (du[5] * geo[15])))))) + (geo[14] * ((1.0 * (geo[19] * ((du[0] * geo[11]) + (du[1] * geo[14]) + (du[2] * geo[17])))) + (1.0 * (geo[19] * ((du[6] * geo[9]) + (du[7] * geo[12]) + (du[8] * geo[15]))))))));
    ev[2] = (w * ((geo[15] * ((3.0 * (geo[19] * ((du[0] * geo[9]) + (du[1] * geo[12]) + (du[2] * geo[15])))) + (1.0 * (geo[19] * ((du[3] * geo[10]) + (du[4] * geo[13]) + (du[5] * geo[16])))) + (1.0 * (geo[19] * ((du[6] * geo[11]) + (du[7] * geo[14]) + (du[8] * geo[17])))))) + (geo[16] * ((1.0 * (geo[19] * ((du[0] * geo[10]) + (du[1] * geo[13]) + (du[2] * geo[16])))) + (1.0 * (geo[19] * ((du[3] * geo[9]) + (du[4] * geo[12]) + (du[5] * geo[15])))))) + (geo[17] * ((1.0 * (geo[19] * ((du[0] * geo[11]) + (du[1] * geo[14]) + (du[2] * geo[17])))) + (1.0 * (geo[19] * ((du[6] * geo[9]) + (du[7] * geo[12]) + (du[8] * geo[15]))))))));
    ev[3] = (w * ((geo[9] * ((1.0 * (geo[19] * ((du[0] * geo[10]) + (du[1] * geo[13]) + (du[2] * geo[16])))) + (1.0 * (geo[19] * ((du[3] * geo[9]) + (du[4] * geo[12]) + (du[5] * geo[15])))))) + (geo[10] * ((1.0 * (geo[19] * ((du[0] * geo[9]) + (du[1] * geo[12]) + (du[2] * geo[15])))) + (3.0 * (geo[19] * ((du[3] * geo[10]) + (du[4] * geo[13]) + (du[5] * geo[16])))) + (1.0 * (geo[19] * ((du[6] * geo[11]) + (du[7] * geo[14]) + (du[8] * geo[17])))))) + (geo[11] * ((1.0 * (geo[19] * ((du[3] * geo[11]) + (du[4] * geo[14]) + (du[5] * geo[17])))) + (1.0 * (geo[19] * ((du[6] * geo[10]) + (du[7] * geo[13]) + (du[8] * geo[16]))))))));
    ev[4] = (w * ((geo[12] * ((1.0 * (geo[19] * ((du[0] * geo[10]) + (du[1] * geo[13]) + (du[2] * geo[16])))) + (1.0 * (geo[19] * ((du[3] * geo[9]) + (du[4] * geo[12]) + (du[5] * geo[15])))))) + (geo[13] * ((1.0 * (geo[19] * ((du[0] * geo[9]) + (du[1] * geo[12]) + (du[2] * geo[15])))) + (3.0 * (geo[19] * ((du[3] * geo[10]) + (du[4] * geo[13]) + (du[5] * geo[16])))) + (1.0 * (geo[19] * ((du[6] * geo[11]) + (du[7] * geo[14]) + (du[8] * geo[17])))))) + (geo[14] * ((1.0 * (geo[19] * ((du[3] * geo[11]) + (du[4] * geo[14]) + (du[5] * geo[17])))) + (1.0 * (geo[19] * ((du[6] * geo[10]) + (du[7] * geo[13]) + (du[8] * geo[16]))))))));
    ev[5] = (w * ((geo[15] * ((1.0 * (geo[19] * ((du[0] * geo[10]) + (du[1] * geo[13]) + (du[2] * geo[16])))) + (1.0 * (geo[19] * ((du[3] * geo[9]) + (du[4] * geo[12]) + (du[5] * geo[15])))))) + (geo[16] * ((1.0 * (geo[19] * ((du[0] * geo[9]) + (du[1] * geo[12]) + (du[2] * geo[15])))) + (3.0 * (geo[19] * ((du[3] * geo[10]) + (du[4] * geo[13]) + (du[5] * geo[16])))) + (1.0 * (geo[19] * ((du[6] * geo[11]) + (du[7] * geo[14]) + (du[8] * geo[17])))))) + (geo[17] * ((1.0 * (geo[19] * ((du[3] * geo[11]) + (du[4] * geo[14]) + (du[5] * geo[17])))) + (1.0 * (geo[19] * ((du[6] * geo[10]) + (du[7] * geo[13]) + (du[8] * geo[16]))))))));
    ev[6] = (w * ((geo[9] * ((1.0 * (geo[19] * ((du[0] * geo[11]) + (du[1] * geo[14]) + (du[2] * geo[17])))) + (1.0 * (geo[19] * ((du[6] * geo[9]) + (du[7] * geo[12]) + (du[8] * geo[15])))))) + (geo[10] * ((1.0 * (geo[19] * ((du[3] * geo[11]) + (du[4] * geo[14]) + (du[5] * geo[17])))) + (1.0 * (geo[19] * ((du[6] * geo[10]) + (du[7] * geo[13]) + (du[8] * geo[16])))))) + (geo[11] * ((1.0 * (geo[19] * ((du[0] * geo[9]) + (du[1] * geo[12]) + (du[2] * geo[15])))) + (1.0 * (geo[19] * ((du[3] * geo[10]) + (du[4] * geo[13]) + (du[5] * geo[16])))) + (3.0 * (geo[19] * ((du[6] * geo[11]) + (du[7] * geo[14]) + (du[8] * geo[17]))))))));
    ev[7] = (w * ((geo[12] * ((1.0 * (geo[19] * ((du[0] * geo[11]) + (du[1] * geo[14]) + (du[2] * geo[17])))) + (1.0 * (geo[19] * ((du[6] * geo[9]) + (du[7] * geo[12]) + (du[8] * geo[15])))))) + (geo[13] * ((1.0 * (geo[19] * ((du[3] * geo[11]) + (du[4] * geo[14]) + (du[5] * geo[17])))) + (1.0 * (geo[19] * ((du[6] * geo[10]) + (du[7] * geo[13]) + (du[8] * geo[16])))))) + (geo[14] * ((1.0 * (geo[19] * ((du[0] * geo[9]) + (du[1] * geo[12]) + (du[2] * geo[15])))) + (1.0 * (geo[19] * ((du[3] * geo[10]) + (du[4] * geo[13]) + (du[5] * geo[16])))) + (3.0 * (geo[19] * ((du[6] * geo[11]) + (du[7] * geo[14]) + (du[8] * geo[17]))))))));
    ev[8] = (w * ((geo[15] * ((1.0 * (geo[19] * ((du[0] * geo[11]) + (du[1] * geo[14]) + (du[2] * geo[17])))) + (1.0 * (geo[19] * ((du[6] * geo[9]) + (du[7] * geo[12]) + (du[8] * geo[15])))))) + (geo[16] * ((1.0 * (geo[19] * ((du[3] * geo[11]) + (du[4] * geo[14]) + (du[5] * geo[17])))) + (1.0 * (geo[19] * ((du[6] * geo[10]) + (du[7] * geo[13]) + (du[8] * geo[16])))))) + (geo[17] * ((1.0 * (geo[19] * ((du[0] * geo[9]) + (du[1] * geo[12]) + (du[2] * geo[15])))) + (1.0 * (geo[19] * ((du[3] * geo[10]) + (du[4] * geo[13]) + (du[5] * geo[16])))) + (3.0 * (geo[19] * ((du[6] * geo[11]) + (du[7] * geo[14]) + (du[8] * geo[17]))))))));
}

extern "C" __global__ void mlt_action(
    const real_t *__restrict__ v0,
    const int *__restrict__ map_v0,
    const real_t *__restrict__ coords,
    const int *__restrict__ map_coords,
    const real_t *__restrict__ Phi_v0,
    const real_t *__restrict__ Psi,
    const real_t *__restrict__ weights,
    real_t *__restrict__ out,
    const int *__restrict__ map_out,
    const int N_cell)
{
    __shared__ real_t B[216];
    __shared__ real_t e[756];
    const int lid0 = threadIdx.x;
    const int lid1 = threadIdx.y;
    const int i_cell = blockIdx.x * N_c + lid0;
    const bool live = i_cell < N_cell;
    real_t J[9] = {0};
    real_t geo[20];
    real_t X[12];
    if (live) {
        for (int a = 0; a < N_COORD; ++a)
            for (int b = 0; b < DIM; ++b)
                X[a * DIM + b] = coords[map_coords[i_cell * N_COORD + a] * DIM + b];
        for (int r = 0; r < DIM; ++r)
            for (int c = 0; c < DIM; ++c)
                J[3 * r + c] = X[(c + 1) * DIM + r] - X[r];
    } else {
        for (int r = 0; r < DIM; ++r) J[4 * r] = 1;
    }
    geometry(J, geo);
    for (int i_quadtile = 0; i_quadtile < 1; ++i_quadtile) {
        const int q0 = i_quadtile * T_Q;
        const int TQ_len = T_Q;
        for (int i_rowtile = 0; i_rowtile < 2; ++i_rowtile) {
            const int r0 = i_rowtile * T_e_r;
            const int Ter_len = T_e_r;
            real_t acc_v0[9][S_e];
            for (int k = 0; k < 9; ++k)
                for (int s = 0; s < S_e; ++s)
                    acc_v0[k][s] = 0;
            for (int i_coltile = 0; i_coltile < 2; ++i_coltile) {
                const int c0 = i_coltile * T_e_c_v0;
                const int Tc_len = T_e_c_v0;
                real_t l_v0[T_e_c_v0 * 3];
                for (int j = 0; j < Tc_len; ++j) {
                    l_v0[j * 3 + 0] = live ? v0[map_v0[i_cell * n_v0 + c0 + j] * 3 + 0] : 0;
                    l_v0[j * 3 + 1] = live ? v0[map_v0[i_cell * n_v0 + c0 + j] * 3 + 1] : 0;
                    l_v0[j * 3 + 2] = live ? v0[map_v0[i_cell * n_v0 + c0 + j] * 3 + 2] : 0;
                }
                for (int i = N_WI * lid0 + lid1; i < 9 * Ter_len * Tc_len; i += N_c * N_WI) {
                    const int k = i / (Ter_len * Tc_len);
                    const int i_r = (i % (Ter_len * Tc_len)) / Tc_len;
                    const int j = i % Tc_len;
                    B[k * T_e_r * T_e_c_v0 + T_e_c_v0 * i_r + j] = Phi_v0[(k * Q + q0 + r0 + i_r) * n_v0 + c0 + j];
                }
                __syncthreads(); // eval_prefetch v0
                for (int s = 0; s < S_e; ++s) {
                    const int r = N_WI * s + lid1;
                    if (r < Ter_len) {
                        for (int j = 0; j < Tc_len; ++j)
                            acc_v0[0][s] += B[0 * T_e_r * T_e_c_v0 + T_e_c_v0 * r + j] * l_v0[j * 3 + 0];
                        for (int j = 0; j < Tc_len; ++j)
                            acc_v0[1][s] += B[1 * T_e_r * T_e_c_v0 + T_e_c_v0 * r + j] * l_v0[j * 3 + 0];
                        for (int j = 0; j < Tc_len; ++j)
                            acc_v0[2][s] += B[2 * T_e_r * T_e_c_v0 + T_e_c_v0 * r + j] * l_v0[j * 3 + 0];
                        for (int j = 0; j < Tc_len; ++j)
                            acc_v0[3][s] += B[3 * T_e_r * T_e_c_v0 + T_e_c_v0 * r + j] * l_v0[j * 3 + 1];
                        for (int j = 0; j < Tc_len; ++j)
                            acc_v0[4][s] += B[4 * T_e_r * T_e_c_v0 + T_e_c_v0 * r + j] * l_v0[j * 3 + 1];
                        for (int j = 0; j < Tc_len; ++j)
                            acc_v0[5][s] += B[5 * T_e_r * T_e_c_v0 + T_e_c_v0 * r + j] * l_v0[j * 3 + 1];
                        for (int j = 0; j < Tc_len; ++j)
                            acc_v0[6][s] += B[6 * T_e_r * T_e_c_v0 + T_e_c_v0 * r + j] * l_v0[j * 3 + 2];
                        for (int j = 0; j < Tc_len; ++j)
                            acc_v0[7][s] += B[7 * T_e_r * T_e_c_v0 + T_e_c_v0 * r + j] * l_v0[j * 3 + 2];
                        for (int j = 0; j < Tc_len; ++j)
                            acc_v0[8][s] += B[8 * T_e_r * T_e_c_v0 + T_e_c_v0 * r + j] * l_v0[j * 3 + 2];
                    }
                }
                __syncthreads(); // eval_compute v0
            }
            for (int s = 0; s < S_e; ++s) {
                const int r = N_WI * s + lid1;
                if (r < Ter_len) {
                    real_t du[N_DU];
                    for (int k = 0; k < 9; ++k)
                        du[0 + k] = acc_v0[k][s];
                    real_t ev[N_w];
                    if (live) {
                        pointwise(du, geo, X, weights[q0 + r0 + r], ev);
                    } else {
                        for (int k = 0; k < N_w; ++k) ev[k] = 0;
                    }
                    for (int k = 0; k < N_w; ++k)
                        e[(k * N_c + lid0) * T_Q + r0 + r] = ev[k];
                }
            }
        }
        __syncthreads(); // eval_quad_sync
        for (int i_rowtile = 0; i_rowtile < 2; ++i_rowtile) {
            const int i0 = i_rowtile * T_q_r;
            const int Tqr_len = T_q_r;
            real_t out_acc[S_q];
            for (int s = 0; s < S_q; ++s) out_acc[s] = 0;
            for (int i_coltile = 0; i_coltile < 1; ++i_coltile) {
                const int c0 = i_coltile * T_q_c;
                const int Tqc_len = T_q_c;
                for (int i = N_WI * lid0 + lid1; i < N_w * Tqr_len * Tqc_len; i += N_c * N_WI) {
                    const int k = i / (Tqr_len * Tqc_len);
                    const int i_r = (i % (Tqr_len * Tqc_len)) / Tqc_len;
                    const int j = i % Tqc_len;
                    B[k * T_q_r * T_q_c + T_q_c * i_r + j] = Psi[(k * n_W + i0 + i_r) * Q + q0 + c0 + j];
                }
                __syncthreads(); // quad_prefetch
                for (int s = 0; s < S_q; ++s) {
                    const int r = N_WI * s + lid1;
                    for (int k = 0; k < N_w; ++k)
                        for (int j = 0; j < Tqc_len; ++j)
                            out_acc[s] += B[k * T_q_r * T_q_c + T_q_c * r + j] * e[(k * N_c + lid0) * T_Q + c0 + j];
                }
                __syncthreads(); // quad_compute
            }
            if (live) {
                for (int s = 0; s < S_q; ++s) {
                    const int r = N_WI * s + lid1;
                    atomicAdd(&out[map_out[i_cell * n_W + i0 + r]], out_acc[s]);
                }
            }
        }
        __syncthreads(); // quad_tile_end
    }
}
