#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <tuple>
#include <vector>

#include "npmix/em.hpp"

namespace npmix {

struct SelectionGrid {
    std::vector<Index> K_values;
    std::vector<double> lambda_values;
    std::vector<double> h_values;
    int cv_folds = 5;

    // Throws EmptyGrid for an empty list, InvalidInput otherwise.
    void validate() const;
};

struct BicRecord {
    Index K = 0;
    double lambda = 0.0;
    double h = 0.0;
    double loglik = 0.0;  // sum over observations
    double df = 0.0;
    double bic = 0.0;
    bool ok = false;
    std::string status = "ok";  // error description when the fit failed
};

// Sum over n of log sum_k pi_k(z_n) phi(x_n | mu_k(z_n), theta_k(z_n)).
double observed_loglik(const Dataset& data, const MixtureParams& params);

// [(K-1) + (1/G) sum_g (K p + sum_k #{i <= j : theta_ij != 0})] * df_unit
double degrees_of_freedom(const MixtureParams& params, const KernelConstants& kconst);

// Length of the observed covariate range, used as |Z| in the kernel df.
double covariate_span(const Dataset& data);

// Builds the record for an existing fit with bandwidth h.
BicRecord bic_record(const Dataset& data, const FitResult& fit, const KernelSpec& kernel);

// Memoized fits keyed on (K, lambda, h, seed). Thread-safe.
class FitCache {
public:
    struct Entry {
        BicRecord record;
        std::shared_ptr<const FitResult> fit;  // null when the fit failed
    };

    const Entry& get(const Dataset& data, const EMConfig& config);
    std::size_t size() const;

private:
    using Key = std::tuple<Index, double, double, std::uint64_t>;
    mutable std::mutex mutex_;
    std::map<Key, std::shared_ptr<Entry>> entries_;
};

// Fits the model for `config` and scores it. Fit errors are recorded in the
// record (bic = +inf) rather than thrown.
BicRecord bic_score(const Dataset& data, const EMConfig& config, FitCache* cache = nullptr);

// BIC for every (K, lambda, h) in the grid, in K-major, lambda, h order.
// `base` supplies kernel family, grid, EM settings and seed; configurations
// run in parallel with base.threads workers.
std::vector<BicRecord> bic_sweep(const Dataset& data, const SelectionGrid& grid,
                                 const EMConfig& base, FitCache* cache = nullptr);

// Fold id per observation: observations sorted by z are dealt round-robin,
// so every training fold spans the whole covariate range.
std::vector<int> cv_fold_ids(const Dataset& data, int folds);

struct CvRecord {
    double h = 0.0;
    double mean_loglik = 0.0;  // held-out log-likelihood per observation
    int failed_folds = 0;
};

struct SelectionResult {
    Index K = 0;
    double lambda = 0.0;
    double h = 0.0;
    std::vector<BicRecord> records;
    std::vector<CvRecord> cv;
};

// Smallest-BIC K over (lambda, h), ties to smaller K.
Index select_K(const std::vector<BicRecord>& records);
// Smallest-BIC K at a fixed bandwidth.
Index select_K_at_h(const std::vector<BicRecord>& records, double h);
// Smallest-BIC lambda over h at fixed K, ties to larger lambda.
double select_lambda(const std::vector<BicRecord>& records, Index K);
// Smallest-BIC lambda at fixed (K, h), ties to larger lambda.
double select_lambda_at_h(const std::vector<BicRecord>& records, Index K, double h);

// Held-out log-likelihood per observation for each bandwidth.
std::vector<CvRecord> cross_validate_h(const Dataset& data, Index K, double lambda,
                                       const std::vector<double>& h_values, int folds,
                                       const EMConfig& base);

// K by BIC over (lambda, h), then lambda by BIC over h at that K, then h by
// cross-validated log-likelihood. Ties go to smaller K, larger lambda and
// larger h.
SelectionResult select(const Dataset& data, const SelectionGrid& grid, const EMConfig& base,
                       FitCache* cache = nullptr);

}  // namespace npmix
