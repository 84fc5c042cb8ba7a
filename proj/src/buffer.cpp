#include "loadseg/buffer.hpp"

namespace loadseg {

AggregationBuffer::AggregationBuffer(int capacity) : capacity_(capacity) {
    // A flush installs two sets, so anything below 2 cannot honor the cap.
    if (capacity < 2) throw ContractViolation("buffer: capacity must be >= 2");
}

void AggregationBuffer::init(MapSet initial_set) {
    if (initial_set.maps.empty()) throw ContractViolation("buffer: empty initial map set");
    if (initial_set.tag != MapSetTag::initial)
        throw ContractViolation("buffer: init expects an initial-tagged set");
    sets_.clear();
    sets_.push_back(std::move(initial_set));
}

BufferOp AggregationBuffer::aggregate(const MapSet* peak_set, MapSet ending_set) {
    if (sets_.empty()) throw ContractViolation("buffer: aggregate before init");
    if (ending_set.maps.empty() || ending_set.tag != MapSetTag::ending)
        throw ContractViolation("buffer: invalid ending set");
    const size_t count = sets_.front().maps.size();
    if (ending_set.maps.size() != count || (peak_set && peak_set->maps.size() != count))
        throw ContractViolation("buffer: map set size mismatch");
    if (peak_set) {
        if (peak_set->tag != MapSetTag::peak) throw ContractViolation("buffer: invalid peak set");
        sets_.clear();
        sets_.push_back(*peak_set);
        sets_.push_back(std::move(ending_set));
        return BufferOp::flush;
    }
    if (static_cast<int>(sets_.size()) >= capacity_) {
        sets_.erase(sets_.begin() + 1);  // oldest ending set; position 0 survives
        sets_.push_back(std::move(ending_set));
        return BufferOp::remove_then_append;
    }
    sets_.push_back(std::move(ending_set));
    return BufferOp::append;
}

const MapSet& AggregationBuffer::at(size_t i) const {
    if (i >= sets_.size()) throw ContractViolation("buffer: index out of range");
    return sets_[i];
}

}  // namespace loadseg
