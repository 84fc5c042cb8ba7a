#pragma once

// The label-map aggregation buffer: a capped ordered list of generated map
// sets. Position 0 always holds the most recent initial-or-peak model's set;
// later entries are ending-model sets in insertion order.

#include <cstdint>
#include <vector>

#include "loadseg/common.hpp"
#include "loadseg/data.hpp"

namespace loadseg {

enum class MapSetTag : uint8_t { initial = 1, peak = 2, ending = 3 };

struct MapSet {
    uint64_t snapshot_id = 0;
    MapSetTag tag = MapSetTag::initial;
    std::vector<LabelMap> maps;  // one per training image
};

enum class BufferOp : uint8_t { none = 0, flush = 1, append = 2, remove_then_append = 3 };

class AggregationBuffer {
public:
    explicit AggregationBuffer(int capacity);

    // Installs the starting model's map set as the sole entry.
    void init(MapSet initial_set);

    // Peak present: flush to exactly [peak set, ending set]. Otherwise append
    // the ending set, first deleting the oldest ending set (index 1) when the
    // buffer is full. Returns which operation happened.
    BufferOp aggregate(const MapSet* peak_set, MapSet ending_set);

    int capacity() const { return capacity_; }
    size_t size() const { return sets_.size(); }
    const MapSet& at(size_t i) const;
    const std::vector<MapSet>& sets() const { return sets_; }

private:
    int capacity_;
    std::vector<MapSet> sets_;
};

}  // namespace loadseg
