#ifndef REM_MODEL_CONFIG_HPP
#define REM_MODEL_CONFIG_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rem/estimate.hpp"
#include "rem/multilevel.hpp"
#include "rem/stats.hpp"
#include "rem/stream.hpp"

namespace rem {

enum class OutputFormat { json, table };

// Schema-checked model description shared by the fit, stream, and multilevel
// subcommands. Unknown keys are rejected at every level; the canonical hash
// of the parsed config is embedded in every output the tool writes.
struct ModelConfig {
    ModelKind model = ModelKind::temporal;
    int n_actors = 0;  // 0 = infer from the data; streams require it explicitly
    std::vector<StatisticSpec> specs;
    std::vector<std::string> fixed_effects;  // multilevel: effects shared across clusters
    std::uint64_t seed = 1;
    OutputFormat format = OutputFormat::json;

    FitOptions fit;

    PoolMode pool_mode = PoolMode::frequentist;
    StreamOptions stream;
    std::optional<GaussianPrior> prior;  // Bayesian stream pooling only

    enum class MlMethod { frequentist, bayesian };
    MlMethod ml_method = MlMethod::frequentist;
    MultilevelOptions multilevel;
    GibbsConfig gibbs;

    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);

    // FNV-1a over the canonical (sorted-key, compact) dump of to_json().
    std::string config_hash() const;

    std::vector<std::string> effect_names() const;
    // Resolve fixed_effects names to spec indices; throws on unknown names.
    std::vector<int> fixed_indices() const;
};

ModelConfig load_model_config(const std::string& path);

}  // namespace rem

#endif  // REM_MODEL_CONFIG_HPP
