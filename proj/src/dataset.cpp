#include "moevl/dataset.hpp"

#include <cmath>
#include <fstream>

#include "moevl/bytes.hpp"
#include "moevl/errors.hpp"
#include "moevl/rng.hpp"

namespace moevl {

namespace {

constexpr double kTau = 6.283185307179586;
constexpr double kWaveNoise = 0.1;
constexpr double kBlockMagnitude = 2.5;
constexpr double kBlockNoise = 0.3;

// All label phases fit inside this fraction of a full turn. A narrow fan
// keeps the shared wave carrier dominant over the per-label phase offset, so
// the domains stay linearly separable as wholes while the labels remain a
// finer distinction within the general domain.
constexpr double kPhaseSpread = 0.15;

int signature_count(int n_classes) { return (n_classes + 1) / 2; }

void validate_params(const DataParams& p) {
    if (p.n <= 0) throw ConfigError("dataset size must be positive, got " + std::to_string(p.n));
    if (p.n1 < 2) throw ConfigError("need n1 >= 2 for the emotion block, got " +
                                    std::to_string(p.n1));
    if (p.n_classes < 2) throw ConfigError("need at least 2 classes");
    if (p.d_v < signature_count(p.n_classes)) {
        throw ConfigError("d_v=" + std::to_string(p.d_v) + " cannot hold " +
                          std::to_string(signature_count(p.n_classes)) +
                          " orthonormal signatures");
    }
    if (p.m_text < 1 || p.vocab < 2) throw ConfigError("need m_text >= 1 and vocab >= 2");
    if (!(p.label_noise >= 0.0 && p.label_noise < 1.0)) {
        throw ConfigError("label_noise must lie in [0, 1)");
    }
    if (!(p.emotion_fraction >= 0.0 && p.emotion_fraction <= 1.0)) {
        throw ConfigError("emotion_fraction must lie in [0, 1]");
    }
}

double wave_value(int t, int j, int d_v, int label, int n_classes) {
    return std::cos(kTau * (j + 3.0 * t) / d_v + kTau * kPhaseSpread * label / n_classes);
}

}  // namespace

const char* domain_name(Domain d) { return d == Domain::General ? "general" : "emotion"; }

std::vector<std::vector<double>> emotion_signatures(int d_v, int n_classes) {
    const int count = signature_count(n_classes);
    if (d_v < count) {
        throw ConfigError("d_v=" + std::to_string(d_v) + " cannot hold " +
                          std::to_string(count) + " orthonormal signatures");
    }
    // Seeded independently of any dataset seed: the signatures are part of
    // the generator's definition, not of a particular draw.
    Rng rng(derive_seed(0, "emotion-signatures"));
    std::vector<std::vector<double>> sigs;
    for (int k = 0; k < count; ++k) {
        std::vector<double> v(static_cast<std::size_t>(d_v));
        for (double& x : v) x = rng.next_uniform(-1.0, 1.0);
        for (const auto& prev : sigs) {
            double dot = 0.0;
            for (int j = 0; j < d_v; ++j) dot += v[static_cast<std::size_t>(j)] * prev[static_cast<std::size_t>(j)];
            for (int j = 0; j < d_v; ++j) v[static_cast<std::size_t>(j)] -= dot * prev[static_cast<std::size_t>(j)];
        }
        double norm = 0.0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        if (norm < 1e-6) throw NumericError("degenerate signature draw");
        for (double& x : v) x /= norm;
        sigs.push_back(std::move(v));
    }
    return sigs;
}

std::vector<SyntheticSample> generate_dataset(const DataParams& p) {
    validate_params(p);
    const auto sigs = emotion_signatures(p.d_v, p.n_classes);
    const long n_emotion = std::lround(p.emotion_fraction * p.n);

    std::vector<SyntheticSample> samples;
    samples.reserve(static_cast<std::size_t>(p.n));
    long acc = 0;
    for (int i = 0; i < p.n; ++i) {
        acc += n_emotion;
        Domain domain = Domain::General;
        if (acc >= p.n) {
            domain = Domain::Emotion;
            acc -= p.n;
        }

        Rng rng(derive_seed(p.seed, "sample", static_cast<std::uint64_t>(i)));
        const int true_label = rng.next_int(p.n_classes);

        Tensor embeddings = Tensor::zeros({p.n1, p.d_v});
        if (domain == Domain::General) {
            for (int t = 0; t < p.n1; ++t) {
                for (int j = 0; j < p.d_v; ++j) {
                    embeddings.at(t, j) = wave_value(t, j, p.d_v, true_label, p.n_classes) +
                                          kWaveNoise * rng.next_uniform(-1.0, 1.0);
                }
            }
        } else {
            const int t0 = rng.next_int(p.n1 - 1);
            const auto& sig = sigs[static_cast<std::size_t>(true_label / 2)];
            const double sign = true_label % 2 == 0 ? 1.0 : -1.0;
            for (int t = 0; t < p.n1; ++t) {
                for (int j = 0; j < p.d_v; ++j) {
                    embeddings.at(t, j) = kWaveNoise * rng.next_uniform(-1.0, 1.0);
                }
            }
            for (int t = t0; t < t0 + 2; ++t) {
                for (int j = 0; j < p.d_v; ++j) {
                    embeddings.at(t, j) += kBlockMagnitude * sign * sig[static_cast<std::size_t>(j)] +
                                           kBlockNoise * rng.next_uniform(-1.0, 1.0);
                }
            }
        }

        std::vector<int> text(static_cast<std::size_t>(p.m_text));
        text[0] = domain == Domain::General ? 0 : 1;
        for (std::size_t k = 1; k < text.size(); ++k) text[k] = rng.next_int(p.vocab);

        int label = true_label;
        if (rng.next_uniform() < p.label_noise) {
            label = (true_label + 1 + rng.next_int(p.n_classes - 1)) % p.n_classes;
        }

        samples.push_back({VisualEmbeddings(std::move(embeddings)), std::move(text), label,
                           domain});
    }
    return samples;
}

int probe_label(const Tensor& embeddings, Domain domain, int n_classes) {
    const int n1 = embeddings.rows();
    const int d_v = embeddings.cols();
    if (domain == Domain::General) {
        int best = 0;
        double best_score = -1e300;
        for (int label = 0; label < n_classes; ++label) {
            double score = 0.0;
            for (int t = 0; t < n1; ++t) {
                for (int j = 0; j < d_v; ++j) {
                    score += embeddings.at(t, j) * wave_value(t, j, d_v, label, n_classes);
                }
            }
            if (score > best_score) {
                best_score = score;
                best = label;
            }
        }
        return best;
    }

    const auto sigs = emotion_signatures(d_v, n_classes);
    int best_label = 0;
    double best_mag = -1.0;
    for (std::size_t k = 0; k < sigs.size(); ++k) {
        for (int t = 0; t < n1; ++t) {
            double dot = 0.0;
            for (int j = 0; j < d_v; ++j) dot += embeddings.at(t, j) * sigs[k][static_cast<std::size_t>(j)];
            if (std::abs(dot) > best_mag) {
                best_mag = std::abs(dot);
                int label = static_cast<int>(2 * k) + (dot > 0.0 ? 0 : 1);
                if (label >= n_classes) label = static_cast<int>(2 * k);
                best_label = label;
            }
        }
    }
    return best_label;
}

double probe_accuracy(const std::vector<SyntheticSample>& samples, int n_classes) {
    if (samples.empty()) throw ContractError("probe needs at least one sample");
    long hits = 0;
    for (const auto& s : samples) {
        hits += probe_label(s.embeddings.values, s.domain, n_classes) == s.label;
    }
    return static_cast<double>(hits) / static_cast<double>(samples.size());
}

namespace {

constexpr char kDatasetMagic[4] = {'E', 'Q', 'D', 'S'};
constexpr std::uint32_t kDatasetVersion = 1;

}  // namespace

void save_dataset(const std::string& path, const DataParams& params,
                  const std::vector<SyntheticSample>& samples) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError(path + ": cannot open for writing");
    out.write(kDatasetMagic, 4);
    bytes::write_u32(out, kDatasetVersion);
    bytes::write_u64(out, params.seed);
    for (int v : {params.n, params.n1, params.d_v, params.m_text, params.vocab,
                  params.n_classes}) {
        bytes::write_u32(out, static_cast<std::uint32_t>(v));
    }
    bytes::write_f64(out, params.label_noise);
    bytes::write_f64(out, params.emotion_fraction);
    bytes::write_u32(out, static_cast<std::uint32_t>(samples.size()));
    for (const auto& s : samples) {
        out.put(s.domain == Domain::Emotion ? 1 : 0);
        bytes::write_u32(out, static_cast<std::uint32_t>(s.label));
        for (int id : s.text) bytes::write_u32(out, static_cast<std::uint32_t>(id));
        for (double v : s.embeddings.values.data) bytes::write_f64(out, v);
        for (std::uint8_t tag : s.embeddings.fec_source) {
            out.put(static_cast<char>(tag));
        }
    }
    if (!out) throw FormatError(path + ": write failed");
}

std::vector<SyntheticSample> load_dataset(const std::string& path, DataParams* params_out) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(path + ": cannot open");
    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4 || std::memcmp(magic, kDatasetMagic, 4) != 0) {
        throw FormatError(path + ": bad magic at byte 0");
    }
    std::uint32_t version;
    if (!bytes::read_u32(in, version)) throw FormatError(path + ": truncated at byte 4");
    if (version != kDatasetVersion) {
        throw FormatError(path + ": unsupported dataset version " + std::to_string(version));
    }
    DataParams p;
    std::uint32_t fields[6];
    if (!bytes::read_u64(in, p.seed) || !bytes::read_u32(in, fields[0]) ||
        !bytes::read_u32(in, fields[1]) || !bytes::read_u32(in, fields[2]) ||
        !bytes::read_u32(in, fields[3]) || !bytes::read_u32(in, fields[4]) ||
        !bytes::read_u32(in, fields[5]) || !bytes::read_f64(in, p.label_noise) ||
        !bytes::read_f64(in, p.emotion_fraction)) {
        throw FormatError(path + ": truncated header");
    }
    p.n = static_cast<int>(fields[0]);
    p.n1 = static_cast<int>(fields[1]);
    p.d_v = static_cast<int>(fields[2]);
    p.m_text = static_cast<int>(fields[3]);
    p.vocab = static_cast<int>(fields[4]);
    p.n_classes = static_cast<int>(fields[5]);

    std::uint32_t count;
    if (!bytes::read_u32(in, count)) throw FormatError(path + ": truncated header");
    std::vector<SyntheticSample> samples;
    samples.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto fail = [&]() -> FormatError {
            return FormatError(path + ": truncated in sample " + std::to_string(i) +
                               " at byte " + std::to_string(in.tellg()));
        };
        const int domain_byte = in.get();
        if (domain_byte < 0) throw fail();
        std::uint32_t label;
        if (!bytes::read_u32(in, label)) throw fail();
        std::vector<int> text(static_cast<std::size_t>(p.m_text));
        for (int& id : text) {
            std::uint32_t raw;
            if (!bytes::read_u32(in, raw)) throw fail();
            id = static_cast<int>(raw);
        }
        std::vector<double> values(static_cast<std::size_t>(p.n1) * p.d_v);
        for (double& v : values) {
            if (!bytes::read_f64(in, v)) throw fail();
        }
        std::vector<std::uint8_t> tags(static_cast<std::size_t>(p.n1));
        for (std::uint8_t& tag : tags) {
            const int raw = in.get();
            if (raw < 0) throw fail();
            tag = static_cast<std::uint8_t>(raw);
        }
        samples.push_back({VisualEmbeddings(Tensor({p.n1, p.d_v}, std::move(values)),
                                            std::move(tags)),
                           std::move(text), static_cast<int>(label),
                           domain_byte ? Domain::Emotion : Domain::General});
    }
    if (params_out != nullptr) *params_out = p;
    return samples;
}

}  // namespace moevl
