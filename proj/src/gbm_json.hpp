#pragma once

#include <json.hpp>

#include "rlhedge/marketsim.hpp"

namespace rlhedge::detail {

inline nlohmann::json gbm_json(const GbmParams& g) {
    return {{"mu", g.mu}, {"sigma", g.sigma}, {"r", g.r}, {"s0", g.s0}, {"horizon_steps", g.horizon_steps}, {"dt", g.dt}};
}

inline GbmParams gbm_from_json(const nlohmann::json& j) {
    GbmParams g;
    g.mu = j.at("mu").get<double>();
    g.sigma = j.at("sigma").get<double>();
    g.r = j.at("r").get<double>();
    g.s0 = j.at("s0").get<double>();
    g.horizon_steps = j.at("horizon_steps").get<int>();
    g.dt = j.at("dt").get<double>();
    return g;
}

}  // namespace rlhedge::detail
