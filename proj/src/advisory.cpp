#include "cellstack/advisory.hpp"

#include <json.hpp>

#include "cellstack/util.hpp"

namespace cellstack::advisory {

namespace {

struct GeometryMedians {
    bool have_2d = false, have_serial = false;
    double mae_alpha_2d = 0.0, mae_alpha_serial = 0.0;
    double mae_b_2d = 0.0, mae_b_serial = 0.0;
};

GeometryMedians medians_by_geometry(const std::vector<mple::RecoveryReport>& rows) {
    std::vector<double> a2, as, b2, bs;
    for (const auto& r : rows) {
        if (r.geometry == geom::Geometry::Independent2D) {
            a2.push_back(r.mae_alpha);
            b2.push_back(r.mae_B);
        } else if (r.geometry == geom::Geometry::Serial3D) {
            as.push_back(r.mae_alpha);
            bs.push_back(r.mae_B);
        }
    }
    GeometryMedians m;
    if (!a2.empty()) {
        m.have_2d = true;
        m.mae_alpha_2d = median(a2);
        m.mae_b_2d = median(b2);
    }
    if (!as.empty()) {
        m.have_serial = true;
        m.mae_alpha_serial = median(as);
        m.mae_b_serial = median(bs);
    }
    return m;
}

}  // namespace

AdvisoryReport advise(const std::vector<mple::RecoveryReport>& recovery,
                      std::optional<double> enrichment_median_iqr, const Thresholds& th) {
    AdvisoryReport rep;
    const GeometryMedians m = medians_by_geometry(recovery);
    const bool have_both = m.have_2d && m.have_serial;

    {
        GoalAdvice g;
        g.goal = "global_composition";
        if (have_both && m.mae_alpha_serial > 0.0) {
            const double ratio = m.mae_alpha_2d / m.mae_alpha_serial;
            g.statistics["mae_alpha_ratio_2d_over_serial"] = ratio;
            g.statistics["mae_alpha_2d"] = m.mae_alpha_2d;
            g.statistics["mae_alpha_serial"] = m.mae_alpha_serial;
            g.sufficient_evidence = true;
            if (ratio <= th.alpha_ratio_max) {
                g.recommendation = "independent 2D sections sufficient";
                g.rationale = "composition error under planar sampling is within " +
                              std::to_string(th.alpha_ratio_max) + "x of serial sampling";
            } else {
                g.recommendation = "serial sections recommended";
                g.rationale = "composition error under planar sampling exceeds the serial "
                              "baseline by more than the configured ratio";
            }
        } else {
            g.recommendation = "insufficient evidence";
            g.rationale = "no paired recovery runs for both geometries";
        }
        rep.goals.push_back(std::move(g));
    }
    {
        GoalAdvice g;
        g.goal = "local_interactions";
        bool unstable = false;
        if (have_both && m.mae_b_serial > 0.0) {
            const double ratio = m.mae_b_2d / m.mae_b_serial;
            g.statistics["mae_B_ratio_2d_over_serial"] = ratio;
            g.statistics["mae_B_2d"] = m.mae_b_2d;
            g.statistics["mae_B_serial"] = m.mae_b_serial;
            g.sufficient_evidence = true;
            unstable = ratio >= th.b_ratio_min;
        }
        if (enrichment_median_iqr) {
            g.statistics["enrichment_median_iqr"] = *enrichment_median_iqr;
            g.sufficient_evidence = true;
            unstable = unstable || *enrichment_median_iqr > th.iqr_high;
        }
        if (!g.sufficient_evidence) {
            g.recommendation = "insufficient evidence";
            g.rationale = "no interaction recovery or section stability runs provided";
        } else if (unstable) {
            g.recommendation = "serial sections + reconstruction";
            g.rationale = "interaction estimates are unstable under planar sampling at this "
                          "budget";
        } else {
            g.recommendation = "2D may suffice";
            g.rationale = "interaction estimates show no measured instability gap at this budget";
        }
        rep.goals.push_back(std::move(g));
    }
    {
        GoalAdvice g;
        g.goal = "structures_gradients";
        g.recommendation = "serial sections + reconstruction";
        g.rationale = "extended structures and along-structure profiles require depth "
                      "continuity that isolated sections cannot provide";
        g.sufficient_evidence = true;
        rep.goals.push_back(std::move(g));
    }
    return rep;
}

std::string to_json(const AdvisoryReport& report) {
    nlohmann::json j;
    j["schema"] = "cellstack.advisory.v1";
    j["goals"] = nlohmann::json::array();
    for (const auto& g : report.goals) {
        nlohmann::json gj;
        gj["goal"] = g.goal;
        gj["recommendation"] = g.recommendation;
        gj["rationale"] = g.rationale;
        gj["sufficient_evidence"] = g.sufficient_evidence;
        gj["statistics"] = g.statistics;
        j["goals"].push_back(std::move(gj));
    }
    return j.dump(2) + "\n";
}

}  // namespace cellstack::advisory
