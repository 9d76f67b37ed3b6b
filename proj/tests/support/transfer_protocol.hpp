#pragma once

// The source/target transfer experiment in one place, so the unit test and
// the acceptance suite run exactly the same protocol.

#include "hsitl/transfer.hpp"
#include "support/synthetic.hpp"

namespace synth {

struct TransferProtocol {
    hsitl::SampleSet source;  // 8 classes, 310/class
    hsitl::SampleSet target;  // 4 classes, 250/class
    hsitl::VariantTask task;  // Ex arm; cold start swaps variant/cfg

    hsitl::VariantTask ex_task() const {
        hsitl::VariantTask t = task;
        t.variant = hsitl::Variant::Ex;
        return t;
    }
    // The cold-start arm trains end-to-end with the same budget the
    // fine-tuning stage gets.
    hsitl::VariantTask cold_task() const {
        hsitl::VariantTask t = task;
        t.variant = hsitl::Variant::B;
        t.train_cfg = task.finetune_cfg;
        return t;
    }
};

inline TransferProtocol transfer_protocol() {
    TransferProtocol proto;
    TransferPair pair = transfer_pair();
    proto.source = pair.source.draw(310, 9000);
    proto.target = pair.target.draw(250, 9001);

    proto.task.target_id = "target";
    proto.task.target = nullptr;  // caller wires source/target pointers
    proto.task.source_id = "source";
    proto.task.source = nullptr;
    proto.task.source_be = {250, 30};
    proto.task.target_b = {20, 10, {}};
    proto.task.arch = hsitl::ArchitectureConfig::cnn1d(2, 4, 32);
    proto.task.arch.fc_sizes = {16, 8};

    hsitl::TrainConfig pre;
    pre.learning_rate = 1e-3;
    pre.batch_size = 32;
    pre.patience = 10;
    pre.max_epochs = 50;
    hsitl::TrainConfig ft = pre;
    ft.batch_size = 16;
    ft.max_epochs = 40;
    proto.task.train_cfg = pre;
    proto.task.finetune_cfg = ft;
    proto.task.band_label = "64";
    return proto;
}

}  // namespace synth
