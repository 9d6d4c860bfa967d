#include "mapo/run_io.hpp"

#include <cerrno>
#include <cmath>
#include <cstring>
#include <ctime>
#include <fcntl.h>
#include <sstream>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include "mapo/parallel.hpp"

namespace mapo {

namespace {

using json = nlohmann::ordered_json;

std::string iso8601_now() {
    std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_doubles(std::ofstream& out, const std::vector<double>& v) {
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void read_doubles(std::ifstream& in, std::vector<double>& v) {
    in.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}

}  // namespace

RunHeader make_run_header(const RunConfig& config) {
    RunHeader h;
    h.config_hash = config_hash(config);
    h.seed = config.seed;
    h.start_time = iso8601_now();
    h.code_version = kCodeVersion;
    return h;
}

MetricsWriter::MetricsWriter(const std::string& path, const RunHeader& header, bool append)
    : out_(path, append ? std::ios::app : std::ios::trunc) {
    if (!out_) throw std::runtime_error("MetricsWriter: cannot open " + path);
    if (!append) {
        json h;
        h["config_hash"] = header.config_hash;
        h["seed"] = header.seed;
        h["start_time"] = header.start_time;
        h["code_version"] = header.code_version;
        out_ << h.dump() << "\n";
        out_.flush();
    }
}

void MetricsWriter::append(const IterationMetrics& m) {
    for (double v : {m.mean_r_out, m.mean_r_sem, m.accuracy, m.mean_turns, m.grad_norm, m.rho_hat,
                     m.lr})
        if (!std::isfinite(v))
            throw std::runtime_error("MetricsWriter: refusing to write a non-finite value");
    if (m.iter <= last_iter_)
        throw std::runtime_error("MetricsWriter: iterations must be strictly increasing");
    json r;
    r["iter"] = m.iter;
    r["mean_r_out"] = m.mean_r_out;
    r["mean_r_sem"] = m.mean_r_sem;
    r["accuracy"] = m.accuracy;
    r["mean_turns"] = m.mean_turns;
    r["grad_norm"] = m.grad_norm;
    r["rho_hat"] = m.rho_hat;
    r["lr"] = m.lr;
    // One complete line per record; a torn write can only lose the tail.
    out_ << r.dump() << "\n";
    out_.flush();
    last_iter_ = m.iter;
}

MetricsFile read_metrics(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_metrics: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw CorruptRunError("read_metrics: empty metrics file");
    json h = json::parse(line, nullptr, false);
    if (h.is_discarded() || !h.is_object() || !h.contains("config_hash"))
        throw CorruptRunError("read_metrics: bad header line");
    MetricsFile f;
    f.header.config_hash = h.at("config_hash").get<std::uint64_t>();
    f.header.seed = h.at("seed").get<std::uint64_t>();
    f.header.start_time = h.at("start_time").get<std::string>();
    f.header.code_version = h.at("code_version").get<std::string>();
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json r = json::parse(line, nullptr, false);
        if (r.is_discarded() || !r.is_object())
            throw CorruptRunError("read_metrics: bad record line");
        IterationMetrics m;
        m.iter = r.at("iter").get<int>();
        m.mean_r_out = r.at("mean_r_out").get<double>();
        m.mean_r_sem = r.at("mean_r_sem").get<double>();
        m.accuracy = r.at("accuracy").get<double>();
        m.mean_turns = r.at("mean_turns").get<double>();
        m.grad_norm = r.at("grad_norm").get<double>();
        m.rho_hat = r.at("rho_hat").get<double>();
        m.lr = r.at("lr").get<double>();
        if (!f.records.empty() && m.iter <= f.records.back().iter)
            throw CorruptRunError("read_metrics: iterations not strictly increasing");
        f.records.push_back(m);
    }
    return f;
}

void save_train_state(const std::string& path, const TrainState& state) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_train_state: cannot open " + path);
    std::size_t group_size =
        state.rout_history.empty() ? 0 : state.rout_history.front().size();
    for (const auto& g : state.rout_history)
        if (g.size() != group_size)
            throw std::invalid_argument("save_train_state: ragged reward history");
    out << "mapo-state-v1 " << state.next_iter << " " << state.opt.step << " "
        << (state.ema_ready ? 1 : 0) << " ";
    out.precision(17);
    out << state.ema_baseline << " " << state.rout_history.size() << " " << group_size << "\n";
    for (const auto& m : state.opt.params.weights) write_doubles(out, m.data);
    for (const auto& m : state.opt.m) write_doubles(out, m.data);
    for (const auto& m : state.opt.v) write_doubles(out, m.data);
    for (const auto& g : state.rout_history) write_doubles(out, g);
    if (!out) throw std::runtime_error("save_train_state: write failed for " + path);
}

TrainState load_train_state(const std::string& path, const PolicyShape& shape) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_train_state: cannot open " + path);
    std::string header;
    if (!std::getline(in, header)) throw CorruptRunError("load_train_state: missing header");
    std::istringstream hs(header);
    std::string magic;
    TrainState st;
    int ema_ready = 0;
    std::size_t n_groups = 0, group_size = 0;
    hs >> magic >> st.next_iter >> st.opt.step >> ema_ready >> st.ema_baseline >> n_groups >>
        group_size;
    if (!hs || magic != "mapo-state-v1")
        throw CorruptRunError("load_train_state: bad header: " + header);
    st.ema_ready = ema_ready != 0;
    st.opt.params = PolicyParams::zeros(shape);
    st.opt.m = zeros_like(st.opt.params.weights);
    st.opt.v = zeros_like(st.opt.params.weights);
    for (auto& m : st.opt.params.weights) read_doubles(in, m.data);
    for (auto& m : st.opt.m) read_doubles(in, m.data);
    for (auto& m : st.opt.v) read_doubles(in, m.data);
    st.rout_history.assign(n_groups, std::vector<double>(group_size, 0.0));
    for (auto& g : st.rout_history) read_doubles(in, g);
    if (!in) throw CorruptRunError("load_train_state: truncated state file");
    return st;
}

std::string config_path(const std::string& dir) { return dir + "/config.cfg"; }
std::string metrics_path(const std::string& dir) { return dir + "/metrics.jsonl"; }
std::string policy_path(const std::string& dir, int iteration) {
    return dir + "/policy_" + std::to_string(iteration) + ".bin";
}
std::string state_path(const std::string& dir, int iteration) {
    return dir + "/state_" + std::to_string(iteration) + ".bin";
}
std::string scenes_path(const std::string& dir) { return dir + "/scenes.txt"; }

RunLock::RunLock(const std::string& dir) : path_(dir + "/lock") {
    int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0)
        throw std::runtime_error("run directory is locked (or not writable): " + path_ + ": " +
                                 std::strerror(errno));
    ::close(fd);
}

RunLock::~RunLock() { ::unlink(path_.c_str()); }

RunBundle load_run(const std::string& dir) {
    RunBundle b;
    {
        std::ifstream in(config_path(dir));
        if (!in) throw std::runtime_error("load_run: missing " + config_path(dir));
        std::ostringstream ss;
        ss << in.rdbuf();
        b.config = parse_config(ss.str());
    }
    MetricsFile mf = read_metrics(metrics_path(dir));
    b.header = mf.header;
    b.metrics = std::move(mf.records);
    if (b.header.config_hash != config_hash(b.config))
        throw CorruptRunError("load_run: config does not match the run header hash");
    for (int k = 0; k <= b.config.iterations; ++k) {
        std::ifstream probe(policy_path(dir, k), std::ios::binary);
        if (probe) b.checkpoint_iters.push_back(k);
    }
    return b;
}

std::string render_transcript(const RunConfig& config, const PolicyParams& old_params,
                              const EmbeddingSpace& space, int iteration, int index) {
    const int G = config.group_size;
    if (index < 0 || index >= config.batch_queries * G)
        throw std::out_of_range("render_transcript: index outside the iteration batch");
    int q = index / G;
    int g = index % G;

    RunConfig ecfg = config;
    if (config.estimator == Estimator::Grpo) ecfg.beta = 0.0;

    const Vocabulary& vocab = space.vocab();
    Scene scene = generate_scene(scene_seed(ecfg, iteration, q), ecfg.grid_size,
                                 ecfg.target_class, vocab);
    Query query = make_query(scene, query_seed(ecfg, iteration, q), vocab);
    std::vector<Trajectory> members(G);
    for (int i = 0; i < G; ++i) {
        Rng rng(rollout_seed(ecfg, iteration, q, i));
        members[i] = sample_trajectory(old_params, scene, query, space, ecfg, rng);
    }
    GroupBatch batch = score_group(std::move(members), ecfg);
    const Trajectory& traj = batch.trajectories[g];

    std::ostringstream os;
    os.precision(12);
    os << "# trajectory iter=" << iteration << " query=" << q << " member=" << g << "\n";
    os << "query: class=" << vocab.objects.at(query.target_class) << " attribute="
       << (query.asked_attribute == Query::Attribute::Color ? "color" : "size")
       << " ground_truth=" << vocab.answer_word(query.ground_truth) << "\n";
    int turn = 0;
    for (const auto& step : traj.steps) {
        if (step.tool_call) {
            auto line = serialize_tool_call(*step.tool_call);
            if (!line.ok())
                throw std::logic_error("render_transcript: unserializable tool call: " +
                                       line.error().message);
            os << "turn " << turn << ": " << line.value() << "\n";
            os << "  z = " << *step.z << "\n";
        } else {
            os << "turn " << turn << ": answer \"" << vocab.answer_word(traj.answer) << "\"\n";
        }
        ++turn;
    }
    os << "r_out = " << traj.r_out << "\n";
    os << "r_sem = " << batch.r_sem[g] << "\n";
    os << "a_out = " << batch.a_out[g] << "\n";
    os << "a_sem = " << batch.a_sem[g] << "\n";
    os << "a_tilde = " << batch.a_tilde[g] << "\n";
    return os.str();
}

}  // namespace mapo
