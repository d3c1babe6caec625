#pragma once

#include <string>

namespace kan {

enum class AttentionKind { regular, pooled, kao_kv, kao_qkv };

const char* to_string(AttentionKind k);
AttentionKind attention_kind_from_string(const std::string& s);

// Analytic cost model, version "madd-v1/mem-v1".
//
// MAdd counts matmul-shaped work only: an (a x b)(b x c) product costs a*b*c,
// a k x k conv costs h_out*w_out*c_in*c_out*k^2, depthwise 3x3 costs
// h_out*w_out*c*9. Softmax, slice means, outer sums, pooling, batch norm and
// activations are excluded (calibrated against the reference operator table;
// matmul-only counts land within the printed precision of every entry).
//
// Memory counts the intermediate buffers an operator materializes (context C,
// pooled keys/values, coefficient matrix E, softmax(E), output O) at 4 bytes
// per value, times batch. Absolute bytes are model-defined; only savings
// percentages are comparable across tools.

inline constexpr const char* kCostModelVersion = "madd-v1/mem-v1";

long long attention_op_madd(AttentionKind k, int h, int w, int c, bool with_wv);
long long attention_op_memory_bytes(AttentionKind k, int h, int w, int c, int batch);

// key count of the coefficient matrix (its batch-norm affine is counted as
// 2 parameters per key row, reported separately from the headline count)
long long attention_coeff_keys(AttentionKind k, int h, int w);

long long conv2d_madd(int h_out, int w_out, int c_in, int c_out, int ksize);
long long dwconv3x3_madd(int h_out, int w_out, int c);
long long fc_madd(int in, int out);

}  // namespace kan
