#include "propspace/error.hpp"

namespace propspace {

const char* errc_name(errc code) {
  switch (code) {
    case errc::precondition: return "Precondition";
    case errc::empty_category_name: return "EmptyCategoryName";
    case errc::duplicate_category: return "DuplicateCategory";
    case errc::empty_corpus: return "EmptyCorpus";
    case errc::empty_list: return "EmptyList";
    case errc::dimension_mismatch: return "DimensionMismatch";
    case errc::zero_vector: return "ZeroVector";
    case errc::too_few_points: return "TooFewPoints";
    case errc::shape_mismatch: return "ShapeMismatch";
    case errc::empty_descriptions: return "EmptyDescriptions";
    case errc::index_out_of_range: return "IndexOutOfRange";
    case errc::io_error: return "IoError";
    case errc::format_error: return "FormatError";
    case errc::corrupt_payload: return "CorruptPayload";
    case errc::non_positive_temperature: return "NonPositiveTemperature";
    case errc::zero_logits: return "ZeroLogits";
    case errc::empty_label: return "EmptyLabel";
    case errc::variant_mismatch: return "VariantMismatch";
    case errc::invalid_spec: return "InvalidSpec";
    case errc::label_out_of_range: return "LabelOutOfRange";
    case errc::empty_matrix: return "EmptyMatrix";
    case errc::output_exists: return "OutputExists";
    case errc::service_error: return "ServiceError";
    case errc::parse_error: return "ParseError";
    case errc::divergence: return "DivergenceError";
  }
  return "Error";
}

int exit_class(errc code) {
  switch (code) {
    case errc::service_error:
      return 2;
    case errc::parse_error:
      return 3;
    case errc::divergence:
      return 4;
    default:
      return 1;
  }
}

}  // namespace propspace
