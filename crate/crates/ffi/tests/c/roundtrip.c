#include <math.h>
#include <stdio.h>
#include <string.h>

#include "sinedelta.h"

#define CHECK(call)                                                         \
  do {                                                                      \
    SdStatus s_ = (call);                                                   \
    if (s_ != SD_STATUS_OK) {                                               \
      fprintf(stderr, "%s:%d status %d: %s\n", __FILE__, __LINE__, (int)s_, \
              sd_last_error_message());                                     \
      return 1;                                                             \
    }                                                                       \
  } while (0)

int main(int argc, char **argv) {
  if (argc != 2) {
    fprintf(stderr, "usage: roundtrip <adapter.sldq>\n");
    return 2;
  }

  SdAdapter *adapter = NULL;
  CHECK(sd_adapter_load(argv[1], &adapter));

  size_t count = 0, footprint = 0, written = 0;
  CHECK(sd_adapter_tensor_count(adapter, &count));
  CHECK(sd_adapter_footprint(adapter, &footprint));
  CHECK(sd_adapter_to_bytes(adapter, NULL, 0, &written));
  if (written != footprint) {
    fprintf(stderr, "size mismatch %zu vs %zu\n", written, footprint);
    return 1;
  }

  SdMatrix *delta = NULL;
  CHECK(sd_adapter_layer_delta(adapter, "layer0", &delta));
  size_t rows = 0, cols = 0;
  CHECK(sd_matrix_shape(delta, &rows, &cols));
  double values[64];
  if (rows * cols > 64) return 1;
  CHECK(sd_matrix_copy_data(delta, values, 64));
  double sum = 0.0;
  for (size_t i = 0; i < rows * cols; i++) sum += values[i] * values[i];

  double sr = 0.0;
  CHECK(sd_stable_rank(delta, &sr));

  SdMatrix *missing = NULL;
  SdStatus s = sd_adapter_layer_delta(adapter, "nope", &missing);
  if (s != SD_STATUS_INVALID_INPUT || strstr(sd_last_error_message(), "nope") == NULL) {
    fprintf(stderr, "expected invalid input, got %d\n", (int)s);
    return 1;
  }

  printf("tensors %zu bytes %zu shape %zux%zu sumsq %.12g sr %.12g\n", count, footprint, rows,
         cols, sum, sr);
  sd_matrix_free(delta);
  sd_adapter_free(adapter);
  return 0;
}
