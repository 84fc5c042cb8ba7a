#include "loadseg/metrics.hpp"
#include "loadseg/models.hpp"

namespace loadseg {

double evaluate_model_miou(const SegmentorModel& model, const Dataset& dataset) {
    if (dataset.empty()) throw ContractViolation("evaluate: empty dataset");
    if (dataset.height != model.arch.height || dataset.width != model.arch.width ||
        dataset.classes != model.arch.classes)
        throw ContractViolation("evaluate: dataset does not match model configuration");
    const int n = static_cast<int>(dataset.size());
    ConfusionMatrix total(dataset.classes);
#pragma omp parallel
    {
        ConfusionMatrix local(dataset.classes);
#pragma omp for schedule(static) nowait
        for (int i = 0; i < n; ++i) {
            const Sample& s = dataset.samples[i];
            const Tensor logits = segmentor_forward(model, s.image);
            const LabelMap pred = predict_label_map(logits);
            confusion_accumulate(local, pred, s.label);
        }
#pragma omp critical
        total.merge(local);
    }
    return miou(total).mean;
}

}  // namespace loadseg
