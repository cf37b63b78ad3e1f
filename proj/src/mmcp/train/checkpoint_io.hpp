#pragma once

#include <filesystem>

#include "mmcp/train/trainer.hpp"

namespace mmcp::train {

// Checkpoint directory layout:
//   manifest.json  config echo, graph echo, dtype, seed, step count, and the
//                  tensor table (name, shape, element offset)
//   params.bin     every tensor back to back, column-major, little-endian
//   history.tsv    one row per completed step: step, L_m, L_s, L_sm, total
//
// Identical runs produce byte-identical directories. Loading validates the
// manifest against the payload (FormatError) and the tensor set against the
// declared graph (std::invalid_argument naming the component).
template <typename T>
void save_checkpoint(const Checkpoint<T>& ckpt, const std::filesystem::path& dir);

template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& dir);

// Finetuned models add the finetune config and chosen training sequences to
// the manifest; history.tsv holds (step, loss).
template <typename T>
void save_task_model(const TaskModel<T>& tm, const std::filesystem::path& dir);

template <typename T>
TaskModel<T> load_task_model(const std::filesystem::path& dir);

void write_history(const std::filesystem::path& path, const std::vector<HistoryRow>& rows);
std::vector<HistoryRow> read_history(const std::filesystem::path& path);

void write_finetune_history(const std::filesystem::path& path,
                            const std::vector<FinetuneRow>& rows);
std::vector<FinetuneRow> read_finetune_history(const std::filesystem::path& path);

}  // namespace mmcp::train
