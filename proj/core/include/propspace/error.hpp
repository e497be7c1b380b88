#pragma once

#include <stdexcept>
#include <string>

namespace propspace {

// Failure taxonomy shared by the library and the CLI. Each code belongs to
// one exit class: 1 validation/shape, 2 external service, 3 parse,
// 4 numerical divergence.
enum class errc {
  precondition,
  empty_category_name,
  duplicate_category,
  empty_corpus,
  empty_list,
  dimension_mismatch,
  zero_vector,
  too_few_points,
  shape_mismatch,
  empty_descriptions,
  index_out_of_range,
  io_error,
  format_error,
  corrupt_payload,
  non_positive_temperature,
  zero_logits,
  empty_label,
  variant_mismatch,
  invalid_spec,
  label_out_of_range,
  empty_matrix,
  output_exists,
  service_error,
  parse_error,
  divergence,
};

const char* errc_name(errc code);
int exit_class(errc code);

class Error : public std::runtime_error {
 public:
  Error(errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message),
        code_(code) {}

  errc code() const { return code_; }

 private:
  errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace propspace
