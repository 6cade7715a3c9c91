#ifndef AUTOCL_CONFIG_HPP
#define AUTOCL_CONFIG_HPP

#include "json.hpp"

#include "autocl/data.hpp"
#include "autocl/losses.hpp"
#include "autocl/models.hpp"
#include "autocl/training.hpp"

// JSON encodings of the configuration types. Readers reject unknown keys.
namespace autocl {

nlohmann::json to_json(const ModelSpec& s);
ModelSpec model_spec_from_json(const nlohmann::json& j);

nlohmann::json to_json(const LossConfig& c);
LossConfig loss_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const EpochRecord& r);
EpochRecord epoch_record_from_json(const nlohmann::json& j);

nlohmann::json to_json(const SyntheticSpec& s);
SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j);

// Throws std::invalid_argument naming the first key of `j` not in `allowed`.
void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const std::string& where);

}  // namespace autocl

#endif  // AUTOCL_CONFIG_HPP
