#include "kan/cost_model.hpp"

#include <stdexcept>

namespace kan {

const char* to_string(AttentionKind k) {
  switch (k) {
    case AttentionKind::regular: return "regular";
    case AttentionKind::pooled: return "pooled";
    case AttentionKind::kao_kv: return "kao_kv";
    case AttentionKind::kao_qkv: return "kao_qkv";
  }
  return "?";
}

AttentionKind attention_kind_from_string(const std::string& s) {
  if (s == "regular") return AttentionKind::regular;
  if (s == "pooled") return AttentionKind::pooled;
  if (s == "kao_kv") return AttentionKind::kao_kv;
  if (s == "kao_qkv") return AttentionKind::kao_qkv;
  throw std::invalid_argument("unknown attention kind: " + s);
}

namespace {
long long pooled_positions(int h, int w) {
  return (long long)((h + 1) / 2) * ((w + 1) / 2);
}
}  // namespace

long long attention_op_madd(AttentionKind k, int h, int w, int c, bool with_wv) {
  const long long n = (long long)h * w;
  const long long hw_sum = h + w;
  long long madd = 0, value_cols = 0;
  switch (k) {
    case AttentionKind::regular:
      madd = 2 * n * n * c;
      value_cols = n;
      break;
    case AttentionKind::pooled:
      madd = 2 * n * pooled_positions(h, w) * c;
      value_cols = pooled_positions(h, w);
      break;
    case AttentionKind::kao_kv:
      madd = 2 * n * hw_sum * c;
      value_cols = hw_sum;
      break;
    case AttentionKind::kao_qkv:
      madd = 2 * hw_sum * hw_sum * c;
      value_cols = hw_sum;
      break;
  }
  if (with_wv) madd += (long long)c * c * value_cols;
  return madd;
}

long long attention_op_memory_bytes(AttentionKind k, int h, int w, int c, int batch) {
  const long long n = (long long)h * w;
  const long long hw_sum = h + w;
  long long values = 0;
  switch (k) {
    case AttentionKind::regular:
      values = 2 * n * n + c * n;  // E, softmax(E), O
      break;
    case AttentionKind::pooled: {
      const long long p = pooled_positions(h, w);
      values = c * p + 2 * p * n + c * n;  // pooled K/V, E, softmax(E), O
      break;
    }
    case AttentionKind::kao_kv:
      values = c * hw_sum + 2 * hw_sum * n + c * n;  // C, E, softmax(E), O
      break;
    case AttentionKind::kao_qkv:
      values = c * hw_sum + 2 * hw_sum * hw_sum + c * hw_sum;
      break;
  }
  return values * 4 * batch;
}

long long attention_coeff_keys(AttentionKind k, int h, int w) {
  switch (k) {
    case AttentionKind::regular: return (long long)h * w;
    case AttentionKind::pooled: return pooled_positions(h, w);
    case AttentionKind::kao_kv:
    case AttentionKind::kao_qkv: return h + w;
  }
  return 0;
}

long long conv2d_madd(int h_out, int w_out, int c_in, int c_out, int ksize) {
  return (long long)h_out * w_out * c_in * c_out * ksize * ksize;
}

long long dwconv3x3_madd(int h_out, int w_out, int c) {
  return (long long)h_out * w_out * c * 9;
}

long long fc_madd(int in, int out) { return (long long)in * out; }

}  // namespace kan
