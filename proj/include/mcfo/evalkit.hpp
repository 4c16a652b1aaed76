#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "mcfo/gradients.hpp"
#include "mcfo/lgssm.hpp"
#include "mcfo/objectives.hpp"
#include "mcfo/samplers.hpp"
#include "mcfo/trainer.hpp"

namespace mcfo {

struct EvalOptions {
  std::size_t K = 1000;
  std::size_t repeats = 10;
  std::uint64_t seed = 1;
  std::size_t threads = 1;
  ResampleScheme scheme = ResampleScheme::multinomial;
};

struct EvalReport {
  std::string checkpoint;
  double nll = 0.0;         // mean over repeats of the per-sequence mean of -log Z_hat
  double nll_stderr = 0.0;  // across repeats
  double ess = 0.0;         // mean over steps, sequences and repeats
  double pred_error = 0.0;  // mean over sequences of the summed one-step error
  std::size_t repeats = 0;
  std::size_t degenerate = 0;
  std::vector<double> log_z;  // per (repeat, sequence), NaN where degenerate
};

// q == nullptr evaluates with the bootstrap proposal at theta.
EvalReport evaluate(const StateSpaceModel& model, ParamSpan theta, const Proposal* q,
                    ParamSpan phi, const std::vector<Sequence>& data, const EvalOptions& opt);

// sum_{t>=2} || obs_mean(sum_i w~_{t-1}^i transition_mean(z_{t-1}^i)) - x_t ||_2
double one_step_prediction_error(const StateSpaceModel& model, ParamSpan theta,
                                 const Sequence& x, const ParticleSet& ps);

enum class SequenceMode { fixed, fresh };

struct GradStudyConfig {
  std::vector<Estimator> estimators = {Estimator::mcfo, Estimator::aesmc_biased, Estimator::iwae};
  std::vector<std::size_t> K_list = {10, 100, 1000};
  std::size_t replicates = 1000;
  SequenceMode mode = SequenceMode::fixed;
  // Fixed mode: replicate r uses sequence r % num_sequences.
  std::size_t num_sequences = 1;
  std::size_t T = 50;
  std::uint64_t seed = 1;
  std::size_t threads = 1;
  bool at_optimum = true;  // phi reference column is 0 only here
  ResampleScheme scheme = ResampleScheme::multinomial;
};

struct GradStudyRow {
  std::string estimator;
  std::string wrt;
  std::string coord;
  std::size_t K = 0;
  double mean = 0.0;
  double std = 0.0;
  std::size_t n = 0;
  double reference = 0.0;  // NaN when unknown
};

struct GradStudyReport {
  std::vector<GradStudyRow> rows;
  // samples[row] holds the replicate values behind rows[row].
  std::vector<std::vector<double>> samples;
};

// Coordinates reported: theta1, theta2 and phi1..phi5 of the linear proposal.
GradStudyReport grad_study(const Lgssm& model, ParamSpan theta, ParamSpan phi,
                           const GradStudyConfig& cfg);
// The sequences grad_study uses in the given mode.
std::vector<Sequence> grad_study_sequences(const Lgssm& model, ParamSpan theta,
                                           const GradStudyConfig& cfg);

void write_gradstudy_csv(std::ostream& out, const GradStudyReport& r);
void write_train_log_csv(std::ostream& out, const std::vector<TrainLogRow>& log);
void write_eval_csv(std::ostream& out, const std::vector<EvalReport>& reports);
void write_bias_csv(std::ostream& out, const std::vector<BiasRow>& rows);

// Generic CSV reader for the files above: header names and numeric/text cells.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};
CsvTable read_csv(std::istream& in);

}  // namespace mcfo
