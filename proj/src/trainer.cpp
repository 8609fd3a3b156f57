#include "blend/trainer.hpp"

#include "blend/error.hpp"
#include "blend/evaluate.hpp"
#include "blend/metrics.hpp"
#include "blend/optim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>

namespace blend {

void TrainConfig::validate() const
{
    require(mu > 0.0, ErrorKind::invalid_parameter, "mu must be positive");
    require(rho >= 0.0 && rho <= 1.0, ErrorKind::invalid_parameter, "rho must lie in [0, 1]");
    require(lambda2 >= 0.0, ErrorKind::invalid_parameter, "lambda2 must be non-negative");
    require(warmup_epochs >= 0, ErrorKind::invalid_parameter, "warmup_epochs must be non-negative");
    require(epochs >= 1 && batch >= 1, ErrorKind::invalid_parameter, "epochs and batch must be positive");
    require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, ErrorKind::invalid_parameter,
            "adam betas must lie in [0, 1)");
    require(period_epochs >= 0.0, ErrorKind::invalid_parameter, "cosine period must be non-negative");
}

nlohmann::json to_json(const TrainConfig& c)
{
    return {{"mu", c.mu},         {"rho", c.rho},       {"lambda2", c.lambda2},
            {"warmup_epochs", c.warmup_epochs},         {"beta1", c.beta1},
            {"beta2", c.beta2},   {"epochs", c.epochs}, {"batch", c.batch},
            {"period_epochs", c.period_epochs},         {"seed", c.seed}};
}

namespace {

AdamConfig adam_config(const TrainConfig& cfg)
{
    AdamConfig a;
    a.beta1 = cfg.beta1;
    a.beta2 = cfg.beta2;
    return a;
}

// Per-sample graphs; gradients are summed in sample order and averaged.
template <class LossFn>
double batch_gradients(const ParamSet& ps, std::size_t n, LossFn&& loss_of, GradMap& grads)
{
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        Graph g;
        Var loss = loss_of(g, i);
        g.backward(loss);
        g.collect_grads(ps, grads);
        total += g.value(loss)[0];
    }
    scale_grads(grads, 1.0 / static_cast<double>(n));
    return total / static_cast<double>(n);
}

std::vector<std::size_t> shuffled(std::size_t n, Rng& rng)
{
    std::vector<std::size_t> v(n);
    std::iota(v.begin(), v.end(), 0);
    std::shuffle(v.begin(), v.end(), rng);
    return v;
}

double median(std::vector<double> v)
{
    if (v.empty())
        return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mean(const std::vector<double>& v)
{
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

class PhaseWriter {
public:
    explicit PhaseWriter(const PhaseOutput& io) : io_(io)
    {
        if (!io_.dir.empty()) {
            std::filesystem::create_directories(io_.dir);
            history_.open(io_.dir / "history.jsonl", std::ios::trunc);
            require(static_cast<bool>(history_), ErrorKind::io, "cannot write history under " + io_.dir.string());
        }
    }
    void record(const nlohmann::json& j)
    {
        if (history_.is_open()) {
            history_ << j.dump() << "\n";
            history_.flush();
        }
    }
    void epoch_checkpoint(const ModelCheckpoint& m, int epoch)
    {
        if (io_.dir.empty() || !io_.checkpoint_every_epoch)
            return;
        char name[32];
        std::snprintf(name, sizeof(name), "epoch_%03d.ckpt", epoch);
        save_checkpoint(m, io_.dir / "epochs" / name);
    }
    void save(const ModelCheckpoint& m, const std::string& name)
    {
        if (!io_.dir.empty())
            save_checkpoint(m, io_.dir / name);
    }

private:
    PhaseOutput io_;
    std::ofstream history_;
};

double psnr_of(const SamplePair& p) { return psnr(p.distorted.pixels, p.clean.pixels); }

Var l1_to(Graph& g, Var out, const ImagePatch& target) { return ops::l1_loss(g, out, g.constant(target.pixels)); }

const TrainablePredicate kAll = [](const std::string&) { return true; };

} // namespace

// --- fork stage -----------------------------------------------------------------------

void fork_step(ModelCheckpoint& fork, Adam& opt, int expert, const std::vector<SamplePair>& batch, double lr)
{
    require_role(fork, {Role::single_expert}, "fork_step");
    require(!batch.empty(), ErrorKind::invalid_input, "empty batch");
    const NetworkConfig net = network_config(fork);
    GradMap grads;
    batch_gradients(
        fork.params, batch.size(),
        [&](Graph& g, std::size_t i) {
            Scope s{&g, &fork.params, kAll};
            return l1_to(g, fork_graph(s, net, expert, g.constant(batch[i].distorted.pixels)), batch[i].clean);
        },
        grads);
    opt.step(fork.params, grads, lr);
    ++fork.step;
}

ExpertsResult train_experts(const std::vector<DatasetManifest>& train, const std::vector<DatasetManifest>& val,
                            const NetworkConfig& net, const TrainConfig& cfg, const PhaseOutput& io)
{
    cfg.validate();
    net.validate();
    require(static_cast<int>(train.size()) == net.experts, ErrorKind::invalid_input,
            "train_experts needs one manifest per expert (" + std::to_string(net.experts) + ")");
    require(val.empty() || val.size() == train.size(), ErrorKind::invalid_input,
            "validation manifests must match the training manifests one to one");
    std::set<DistortionKind> kinds;
    for (std::size_t k = 0; k < train.size(); ++k) {
        require(train[k].only.has_value(), ErrorKind::invalid_input,
                "manifest " + std::to_string(k + 1) + " is not a single-distortion set");
        require(kinds.insert(*train[k].only).second, ErrorKind::invalid_input,
                std::string("two expert manifests hold ") + to_string(*train[k].only));
        if (!val.empty())
            require(val[k].only == train[k].only, ErrorKind::invalid_input,
                    "validation manifest " + std::to_string(k + 1) + " holds a different distortion kind");
    }

    std::vector<std::vector<SamplePair>> data, held;
    for (std::size_t k = 0; k < train.size(); ++k) {
        data.push_back(load_pairs(train[k]));
        require(!data.back().empty(), ErrorKind::invalid_input, "empty expert manifest");
        if (!val.empty())
            held.push_back(load_pairs(val[k]));
    }

    ExpertsResult res;
    res.fork = init_fork_model(net, mix_seed(cfg.seed, 11));
    Adam opt(adam_config(cfg));
    Rng rng(mix_seed(cfg.seed, 12));
    PhaseWriter out(io);

    std::size_t steps_per_epoch = 0;
    for (const auto& d : data)
        steps_per_epoch += (d.size() + cfg.batch - 1) / cfg.batch;
    long long step = 0;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        // round-robin over kinds so every expert sees the whole schedule
        std::vector<std::vector<std::size_t>> order;
        for (const auto& d : data)
            order.push_back(shuffled(d.size(), rng));
        std::vector<std::vector<double>> losses(data.size());
        std::vector<std::size_t> cursor(data.size(), 0);
        bool any = true;
        double lr = 0.0;
        while (any) {
            any = false;
            for (std::size_t k = 0; k < data.size(); ++k) {
                if (cursor[k] >= data[k].size())
                    continue;
                any = true;
                const std::size_t end = std::min(data[k].size(), cursor[k] + cfg.batch);
                std::vector<SamplePair> batch;
                for (std::size_t i = cursor[k]; i < end; ++i)
                    batch.push_back(data[k][order[k][i]]);
                cursor[k] = end;
                lr = cosine_lr(cfg.mu, static_cast<double>(step) / steps_per_epoch, cfg.period());
                const NetworkConfig arch = network_config(res.fork);
                GradMap grads;
                const double loss = batch_gradients(
                    res.fork.params, batch.size(),
                    [&](Graph& g, std::size_t i) {
                        Scope s{&g, &res.fork.params, kAll};
                        return l1_to(g, fork_graph(s, arch, static_cast<int>(k) + 1, g.constant(batch[i].distorted.pixels)),
                                     batch[i].clean);
                    },
                    grads);
                opt.step(res.fork.params, grads, lr);
                ++res.fork.step;
                ++step;
                losses[k].push_back(loss);
            }
        }
        nlohmann::json rec = {{"epoch", epoch}, {"phase", "experts"}, {"lr", lr}};
        for (std::size_t k = 0; k < data.size(); ++k) {
            const std::string kind = to_string(*train[k].only);
            rec["loss"][kind] = mean(losses[k]);
            if (!held.empty() && !held[k].empty()) {
                const auto [p, s] = mean_quality(res.fork, ForwardKind::fork, held[k], static_cast<int>(k) + 1);
                double in = 0.0;
                for (const auto& pr : held[k])
                    in += psnr_of(pr);
                rec["val_psnr"][kind] = p;
                rec["val_ssim"][kind] = s;
                rec["input_psnr"][kind] = in / held[k].size();
            }
        }
        res.history.push_back(rec);
        out.record(rec);
        out.epoch_checkpoint(res.fork, epoch);
    }
    res.fork.config["kinds"] = nlohmann::json::array();
    for (const auto& m : train)
        res.fork.config["kinds"].push_back(to_string(*m.only));
    for (int k = 1; k <= net.experts; ++k)
        res.experts.push_back(extract_expert(res.fork, k));
    out.save(res.fork, "fork.ckpt");
    for (int k = 1; k <= net.experts; ++k)
        out.save(res.experts[k - 1], "expert_" + std::to_string(k) + ".ckpt");
    return res;
}

// --- join stage -----------------------------------------------------------------------

BaseResult train_base(const DatasetManifest& train, const DatasetManifest& val, ModelCheckpoint init,
                      const TrainConfig& cfg, const PhaseOutput& io)
{
    cfg.validate();
    require_role(init, {Role::base_R}, "train_base");
    const auto data = load_pairs(train);
    const auto held = load_pairs(val);
    require(!data.empty() && !held.empty(), ErrorKind::invalid_input, "train_base needs training and validation data");
    const NetworkConfig net = network_config(init);

    BaseResult res;
    ModelCheckpoint model = std::move(init);
    Adam opt(adam_config(cfg));
    Rng rng(mix_seed(cfg.seed, 13));
    PhaseWriter out(io);
    const std::size_t steps_per_epoch = (data.size() + cfg.batch - 1) / cfg.batch;
    double input_psnr = 0.0;
    for (const auto& p : held)
        input_psnr += psnr_of(p);
    input_psnr /= held.size();
    double best = -INFINITY;
    long long step = 0;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto order = shuffled(data.size(), rng);
        std::vector<double> losses;
        double lr = 0.0;
        for (std::size_t start = 0; start < data.size(); start += cfg.batch) {
            const std::size_t n = std::min<std::size_t>(cfg.batch, data.size() - start);
            lr = cosine_lr(cfg.mu, static_cast<double>(step) / steps_per_epoch, cfg.period());
            GradMap grads;
            losses.push_back(batch_gradients(
                model.params, n,
                [&](Graph& g, std::size_t i) {
                    const SamplePair& p = data[order[start + i]];
                    Scope s{&g, &model.params, kAll};
                    return l1_to(g, base_graph(s, net, g.constant(p.distorted.pixels)).output, p.clean);
                },
                grads));
            opt.step(model.params, grads, lr);
            ++model.step;
            ++step;
        }
        const auto [vp, vs] = mean_quality(model, ForwardKind::base, held);
        nlohmann::json rec = {{"epoch", epoch},   {"phase", "base"},   {"loss", mean(losses)},
                              {"lr", lr},         {"val_psnr", vp},    {"val_ssim", vs},
                              {"input_psnr", input_psnr}};
        res.history.push_back(rec);
        out.record(rec);
        out.epoch_checkpoint(model, epoch);
        if (vp > best) {
            best = vp;
            res.best = model;
            res.best_epoch = epoch;
        }
    }
    res.best.config["best_epoch"] = res.best_epoch;
    out.save(res.best, "base.ckpt");
    return res;
}

// --- warm-up ----------------------------------------------------------------------------

WarmupResult warmup_expanded(const DatasetManifest& train_new, const DatasetManifest& val_new,
                             const ModelCheckpoint& base, const TrainConfig& cfg, const PhaseOutput& io)
{
    cfg.validate();
    require_role(base, {Role::base_R}, "warmup_expanded");
    const auto data = load_pairs(train_new);
    const auto held = load_pairs(val_new);
    require(!data.empty() && !held.empty(), ErrorKind::invalid_input, "warm-up needs new-task data");
    const NetworkConfig net = network_config(base);

    WarmupResult res;
    res.expanded = init_expanded(base, mix_seed(cfg.seed, 21));
    ModelCheckpoint& model = res.expanded;
    const TrainablePredicate p2_only = [&](const std::string& name) {
        return classify_param(name, net.experts) == ParamGroup::expanded_private;
    };
    Adam opt(adam_config(cfg));
    Rng rng(mix_seed(cfg.seed, 22));
    PhaseWriter out(io);

    for (int epoch = 1; epoch <= cfg.warmup_epochs; ++epoch) {
        const auto order = shuffled(data.size(), rng);
        std::vector<double> losses;
        for (std::size_t start = 0; start < data.size(); start += cfg.batch) {
            const std::size_t n = std::min<std::size_t>(cfg.batch, data.size() - start);
            GradMap grads;
            losses.push_back(batch_gradients(
                model.params, n,
                [&](Graph& g, std::size_t i) {
                    const SamplePair& p = data[order[start + i]];
                    Scope s{&g, &model.params, p2_only};
                    return l1_to(g, expanded_graph(s, net, g.constant(p.distorted.pixels)).output, p.clean);
                },
                grads));
            opt.step(model.params, grads, cfg.mu);
            ++model.step;
        }
        const auto [vp, vs] = mean_quality(model, ForwardKind::expanded, held);
        nlohmann::json rec = {{"epoch", epoch},          {"phase", "warmup"},   {"loss", mean(losses)},
                              {"loss_median", median(losses)}, {"lr", cfg.mu}, {"new_psnr", vp},
                              {"new_ssim", vs}};
        res.history.push_back(rec);
        out.record(rec);
        out.epoch_checkpoint(model, epoch);
    }
    out.save(model, "expanded.ckpt");
    return res;
}

// --- incremental stage -------------------------------------------------------------------

const char* to_string(Setting s)
{
    switch (s) {
    case Setting::A_new_only: return "A";
    case Setting::B_joint: return "B";
    case Setting::C_pseudo: return "C";
    case Setting::finetune: return "finetune";
    }
    return "?";
}

Setting parse_setting(const std::string& s)
{
    if (s == "A")
        return Setting::A_new_only;
    if (s == "B")
        return Setting::B_joint;
    if (s == "C")
        return Setting::C_pseudo;
    if (s == "finetune")
        return Setting::finetune;
    fail(ErrorKind::invalid_input, "unknown setting '" + s + "' (A, B, C, finetune)");
}

const char* to_string(HandleKind k)
{
    switch (k) {
    case HandleKind::new_train: return "new_train";
    case HandleKind::new_val: return "new_val";
    case HandleKind::old_val: return "old_val";
    case HandleKind::old_real_train: return "old_real_train";
    case HandleKind::old_pseudo_train: return "old_pseudo_train";
    }
    return "?";
}

SettingSpec::SettingSpec(Setting setting, std::vector<DataHandle> handles)
    : setting_(setting), handles_(std::move(handles))
{
    std::set<HandleKind> seen;
    for (const auto& h : handles_) {
        require(seen.insert(h.kind).second, ErrorKind::invalid_input,
                std::string("duplicate data handle ") + to_string(h.kind));
        if (h.kind == HandleKind::old_real_train)
            require(setting_ == Setting::B_joint, ErrorKind::access_violation,
                    std::string("setting ") + to_string(setting_) + " may not hold real old-task training data");
        if (h.kind == HandleKind::old_pseudo_train)
            require(setting_ == Setting::C_pseudo, ErrorKind::invalid_input,
                    std::string("pseudo old-task data is only used by setting C, not ") + to_string(setting_));
    }
    for (HandleKind k : {HandleKind::new_train, HandleKind::new_val, HandleKind::old_val})
        require(seen.count(k) != 0, ErrorKind::invalid_input, std::string("missing data handle ") + to_string(k));
    if (setting_ == Setting::B_joint)
        require(seen.count(HandleKind::old_real_train) != 0, ErrorKind::invalid_input,
                "setting B needs real old-task training data");
    if (setting_ == Setting::C_pseudo)
        require(seen.count(HandleKind::old_pseudo_train) != 0, ErrorKind::invalid_input,
                "setting C needs a pseudo-pair store");
}

bool SettingSpec::has(HandleKind k) const
{
    return std::any_of(handles_.begin(), handles_.end(), [k](const DataHandle& h) { return h.kind == k; });
}

DatasetManifest SettingSpec::open(HandleKind k) const
{
    for (const auto& h : handles_)
        if (h.kind == k) {
            DatasetManifest m = read_manifest(h.manifest);
            if (k == HandleKind::old_pseudo_train)
                require(m.task == "pseudo", ErrorKind::access_violation,
                        h.manifest.string() + " is not a pseudo-pair store (task '" + m.task + "')");
            return m;
        }
    fail(ErrorKind::access_violation, std::string("setting ") + to_string(setting_) + " holds no handle "
                                          + to_string(k));
}

IncrementalResult train_incremental(const SettingSpec& spec, const ModelCheckpoint& base,
                                    const ModelCheckpoint& expanded, const TrainConfig& cfg, const PhaseOutput& io)
{
    cfg.validate();
    const Setting setting = spec.setting();
    const auto data = load_pairs(spec.open(HandleKind::new_train));
    const auto new_val = load_pairs(spec.open(HandleKind::new_val));
    const auto old_val = load_pairs(spec.open(HandleKind::old_val));
    std::vector<SamplePair> old_data;
    if (setting == Setting::B_joint)
        old_data = load_pairs(spec.open(HandleKind::old_real_train));
    else if (setting == Setting::C_pseudo)
        old_data = load_pairs(spec.open(HandleKind::old_pseudo_train));
    require(!data.empty() && !new_val.empty() && !old_val.empty(), ErrorKind::invalid_input,
            "incremental training needs new-task and validation data");
    const bool with_old = setting == Setting::B_joint || setting == Setting::C_pseudo;
    require(!with_old || !old_data.empty(), ErrorKind::invalid_input, "empty old-task training set");

    IncrementalResult res;
    ModelCheckpoint model = merge_incremental(base, expanded);
    const NetworkConfig net = network_config(model);
    const ParameterPartition part = partition_params(model);
    std::tie(res.initial_old_psnr, res.initial_old_ssim) = mean_quality(base, ForwardKind::base, old_val);
    std::tie(res.initial_new_psnr, res.initial_new_ssim) = mean_quality(expanded, ForwardKind::expanded, new_val);

    const TrainablePredicate trainable = [&](const std::string& name) {
        return setting != Setting::finetune || !part.base_private.count(name);
    };
    Adam opt(adam_config(cfg));
    Rng rng(mix_seed(cfg.seed, 31));
    PhaseWriter out(io);
    const std::size_t steps_per_epoch = (data.size() + cfg.batch - 1) / cfg.batch;
    double best = -INFINITY;
    long long step = 0;
    std::size_t old_cursor = 0;
    std::vector<std::size_t> old_order = shuffled(old_data.size(), rng);

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto order = shuffled(data.size(), rng);
        std::vector<double> l_new, l_old, l_total;
        double max_decomp = 0.0;
        LearningRates lrs{};
        for (std::size_t start = 0; start < data.size(); start += cfg.batch) {
            const std::size_t n = std::min<std::size_t>(cfg.batch, data.size() - start);
            const double t = static_cast<double>(step) / steps_per_epoch;
            lrs = lr_schedule(t, cfg.period(), cfg.mu, cfg.rho);
            if (setting == Setting::finetune)
                lrs.shared = lrs.expanded;
            // 1:1 pairing of new samples with old (real or pseudo) samples
            std::vector<std::size_t> old_idx;
            if (with_old)
                for (std::size_t i = 0; i < n; ++i) {
                    if (old_cursor == old_order.size()) {
                        old_order = shuffled(old_data.size(), rng);
                        old_cursor = 0;
                    }
                    old_idx.push_back(old_order[old_cursor++]);
                }
            double bn = 0.0, bo = 0.0;
            GradMap grads;
            const double bt = batch_gradients(
                model.params, n,
                [&](Graph& g, std::size_t i) {
                    Scope s{&g, &model.params, trainable};
                    const SamplePair& p = data[order[start + i]];
                    Var ln = l1_to(g, expanded_graph(s, net, g.constant(p.distorted.pixels)).output, p.clean);
                    bn += g.value(ln)[0];
                    if (!with_old)
                        return ln;
                    const SamplePair& q = old_data[old_idx[i]];
                    Var lo = l1_to(g, base_graph(s, net, g.constant(q.distorted.pixels)).output, q.clean);
                    bo += g.value(lo)[0];
                    return ops::add(g, ln, ops::scale(g, lo, cfg.lambda2));
                },
                grads);
            bn /= n;
            bo /= n;
            max_decomp = std::max(max_decomp, std::abs(bt - (bn + cfg.lambda2 * bo)));
            opt.step(model.params, grads, [&](const std::string& name) {
                return part.expanded_private.count(name) ? lrs.expanded : lrs.shared;
            });
            ++model.step;
            ++step;
            l_new.push_back(bn);
            l_old.push_back(bo);
            l_total.push_back(bt);
        }
        const auto [op, os] = mean_quality(model, ForwardKind::base, old_val);
        const auto [np, ns] = mean_quality(model, ForwardKind::expanded, new_val);
        nlohmann::json rec = {{"epoch", epoch},
                              {"setting", to_string(setting)},
                              {"loss_total", mean(l_total)},
                              {"loss_new", mean(l_new)},
                              {"loss_old", mean(l_old)},
                              {"lambda2", with_old ? cfg.lambda2 : 0.0},
                              {"loss_decomposition_error", max_decomp},
                              {"lr_expanded", lrs.expanded},
                              {"lr_shared", lrs.shared},
                              {"old_psnr", op},
                              {"old_ssim", os},
                              {"new_psnr", np},
                              {"new_ssim", ns}};
        res.history.push_back(rec);
        out.record(rec);
        out.epoch_checkpoint(model, epoch);
        const double score = with_old ? 0.5 * (op + np) : np;
        if (score > best) {
            best = score;
            res.best = model;
            res.best_epoch = epoch;
        }
    }
    res.last = model;
    res.best.config["best_epoch"] = res.best_epoch;
    res.best.config["setting"] = to_string(setting);
    out.save(res.best, "incremental.ckpt");
    return res;
}

} // namespace blend
