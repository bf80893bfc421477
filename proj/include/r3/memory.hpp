// The shared memory bank: ordered step records, the observed map topology,
// per-viewpoint memories and the current plan. Verbalizes itself for the
// slow-thinking prompts and resets on restart.
#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "r3/action.hpp"
#include "r3/world.hpp"

namespace r3 {

/// Per-viewpoint memory: the oriented arrival view under the Runner, the
/// textual scene description under the Ruminator.
struct MemoryEntry {
    enum class Kind { OrientedView, SceneDescription };
    Kind kind = Kind::OrientedView;
    std::vector<double> feature;    // OrientedView
    std::vector<std::string> tags;  // OrientedView
    std::string text;               // SceneDescription

    static MemoryEntry oriented(std::vector<double> feature, std::vector<std::string> tags) {
        MemoryEntry e;
        e.kind = Kind::OrientedView;
        e.feature = std::move(feature);
        e.tags = std::move(tags);
        return e;
    }
    static MemoryEntry scene(std::string text) {
        MemoryEntry e;
        e.kind = Kind::SceneDescription;
        e.text = std::move(text);
        return e;
    }

    std::string render() const {
        if (kind == Kind::SceneDescription) return text;
        std::string out;
        for (std::size_t i = 0; i < tags.size(); ++i) {
            if (i) out += ", ";
            out += tags[i];
        }
        return out;
    }
};

struct StepRecord {
    int t = 0;
    std::string viewpoint;
    std::optional<Action> action;      // absent on the first record
    double action_rel_heading = 0.0;   // relative heading of the chosen candidate
    std::vector<std::string> action_slot_tags;  // tags of the slot traversed by the action
    Mode mode = Mode::Runner;
    MemoryEntry entry;
    std::vector<std::string> neighbors;  // navigable ids observed on arrival
};

/// Observed topology: visited and frontier viewpoints with visit bookkeeping.
struct ObservedMap {
    std::set<std::string> nodes;
    std::set<std::pair<std::string, std::string>> edges;  // unordered, stored sorted
    std::map<std::string, int> last_visit;
    std::map<std::string, int> visit_count;

    void add_edge(const std::string& a, const std::string& b) {
        edges.insert(a < b ? std::make_pair(a, b) : std::make_pair(b, a));
    }

    std::vector<std::string> neighbors_of(const std::string& id) const {
        std::vector<std::string> out;
        for (const auto& [a, b] : edges) {
            if (a == id) out.push_back(b);
            if (b == id) out.push_back(a);
        }
        std::sort(out.begin(), out.end());
        return out;
    }
};

struct Plan {
    enum class Origin { Ruminator, Formulation };
    int t = 0;
    std::string text;
    Origin origin = Origin::Ruminator;
};

struct BankVerbalization {
    std::string trajectory_text;
    std::string map_text;
};

/// Arrival entry for a move that faced `heading` on reaching `vp`: the
/// feature and tags of the slot nearest that heading.
inline MemoryEntry oriented_entry(const WorldGraph& world, const std::string& vp, double heading) {
    const Viewpoint& v = world.at(vp);
    const DirectionSlot* best = &v.slots.front();
    for (const auto& s : v.slots)
        if (std::abs(wrap_angle(s.heading - heading)) < std::abs(wrap_angle(best->heading - heading)))
            best = &s;
    return MemoryEntry::oriented(best->feature, best->tags);
}

class MemoryBank {
public:
    /// Records must arrive with consecutive timesteps starting at 0.
    void append(StepRecord record) {
        const int expected = records_.empty() ? 0 : records_.back().t + 1;
        if (record.t != expected)
            throw Error("memory: out-of-order timestep " + std::to_string(record.t) + ", expected " +
                        std::to_string(expected));
        if (record.t == 0 && record.action)
            throw Error("memory: the first record must carry no action");
        if (record.t > 0 && !record.action)
            throw Error("memory: record " + std::to_string(record.t) + " is missing its action");
        const bool oriented = record.entry.kind == MemoryEntry::Kind::OrientedView;
        if (oriented != (record.mode == Mode::Runner))
            throw Error("memory: entry kind does not match recording mode at t=" +
                        std::to_string(record.t));

        if (!map_.visit_count.count(record.viewpoint)) visit_order_.push_back(record.viewpoint);
        map_.nodes.insert(record.viewpoint);
        map_.visit_count[record.viewpoint] += 1;
        map_.last_visit[record.viewpoint] = record.t;
        if (!records_.empty()) map_.add_edge(records_.back().viewpoint, record.viewpoint);
        for (const auto& n : record.neighbors) {
            map_.nodes.insert(n);
            map_.add_edge(record.viewpoint, n);
        }
        records_.push_back(std::move(record));
    }

    /// Highest visit count across viewpoints; 0 on an empty bank.
    int max_revisit() const {
        int m = 0;
        for (const auto& [id, c] : map_.visit_count) m = std::max(m, c);
        return m;
    }

    /// Number of actions taken.
    int trajectory_len() const {
        int n = 0;
        for (const auto& r : records_) n += r.action.has_value() ? 1 : 0;
        return n;
    }

    bool empty() const { return records_.empty(); }
    const std::vector<StepRecord>& records() const { return records_; }
    const ObservedMap& observed_map() const { return map_; }
    const std::vector<std::string>& visit_order() const { return visit_order_; }

    const std::optional<Plan>& plan() const { return plan_; }
    void set_plan(Plan p) { plan_ = std::move(p); }

    /// Newest-wins overwrite of the latest record's memory entry.
    void overwrite_latest_entry(MemoryEntry entry, Mode mode) {
        if (records_.empty()) throw Error("memory: no record to overwrite");
        records_.back().entry = std::move(entry);
        records_.back().mode = mode;
    }

    void reset() {
        records_.clear();
        map_ = ObservedMap{};
        visit_order_.clear();
        plan_.reset();
    }

    /// Fixed textual rendering of the trajectory and observed map.
    BankVerbalization verbalize() const {
        if (records_.empty()) throw Error("memory: cannot verbalize an empty bank");
        std::ostringstream traj;
        traj << "You begin the navigation at " << records_.front().viewpoint << " where you see "
             << records_.front().entry.render();
        for (std::size_t k = 1; k < records_.size(); ++k) {
            const auto& r = records_[k];
            traj << "; step " << r.t << ": "
                 << verbalize_action(r.action_rel_heading, r.action->target) << " where you see "
                 << r.entry.render();
        }

        std::ostringstream mp;
        bool first = true;
        for (const auto& id : visit_order_) {
            auto nbrs = map_.neighbors_of(id);
            if (nbrs.empty()) continue;
            if (!first) mp << "; ";
            first = false;
            mp << id << " is connected with ";
            for (std::size_t i = 0; i < nbrs.size(); ++i) {
                if (i) mp << ", ";
                mp << nbrs[i];
            }
        }
        return {traj.str(), mp.str()};
    }

    Json to_jsonl_records() const {
        Json arr = Json::array();
        for (const auto& r : records_) arr.push_back(record_to_json(r));
        return arr;
    }

    static Json record_to_json(const StepRecord& r) {
        Json j;
        j["t"] = r.t;
        j["viewpoint"] = r.viewpoint;
        j["mode"] = to_string(r.mode);
        if (r.action) {
            j["action"] = {{"kind", r.action->is_stop() ? "stop" : "move"},
                           {"target", r.action->target}};
            j["action_rel_heading"] = r.action_rel_heading;
            j["action_slot_tags"] = r.action_slot_tags;
        }
        if (r.entry.kind == MemoryEntry::Kind::OrientedView)
            j["entry"] = {{"kind", "oriented_view"}, {"feature", r.entry.feature}, {"tags", r.entry.tags}};
        else
            j["entry"] = {{"kind", "scene_description"}, {"text", r.entry.text}};
        j["neighbors"] = r.neighbors;
        return j;
    }

    static StepRecord record_from_json(const Json& j) {
        StepRecord r;
        r.t = j.at("t").get<int>();
        r.viewpoint = j.at("viewpoint").get<std::string>();
        r.mode = j.at("mode").get<std::string>() == "runner" ? Mode::Runner : Mode::Ruminator;
        if (j.contains("action")) {
            const auto& a = j.at("action");
            if (a.at("kind").get<std::string>() == "stop")
                r.action = Action::stop();
            else
                r.action = Action::move(a.at("target").get<std::string>());
            r.action_rel_heading = j.at("action_rel_heading").get<double>();
            r.action_slot_tags = j.at("action_slot_tags").get<std::vector<std::string>>();
        }
        const auto& e = j.at("entry");
        if (e.at("kind").get<std::string>() == "oriented_view")
            r.entry = MemoryEntry::oriented(e.at("feature").get<std::vector<double>>(),
                                            e.at("tags").get<std::vector<std::string>>());
        else
            r.entry = MemoryEntry::scene(e.at("text").get<std::string>());
        r.neighbors = j.at("neighbors").get<std::vector<std::string>>();
        return r;
    }

private:
    std::vector<StepRecord> records_;
    ObservedMap map_;
    std::vector<std::string> visit_order_;  // visited viewpoints, first-visit order
    std::optional<Plan> plan_;
};

}  // namespace r3
