#include "blend/gan.hpp"

#include "blend/distortion.hpp"
#include "blend/error.hpp"
#include "blend/network.hpp"
#include "blend/optim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace blend {

namespace {

const TrainablePredicate kFrozen = [](const std::string&) { return false; };
const TrainablePredicate kAll = [](const std::string&) { return true; };

constexpr double kDiscSlope = 0.2;

void init_conv_transpose(ParamSet& ps, Rng& rng, const std::string& name, int in_c, int out_c, int k)
{
    Tensor w({in_c, out_c, k, k});
    std::normal_distribution<double> nd(0.0, std::sqrt(2.0 / (in_c * k * k)));
    for (double& v : w.values())
        v = nd(rng);
    ps.add(name + ".w", std::move(w));
    ps.add(name + ".b", Tensor({out_c}));
}

std::string res_name(int r, char part) { return "G/res" + std::to_string(r) + "/" + part; }

} // namespace

void GanConfig::validate() const
{
    require(lambda1 > 0.0, ErrorKind::invalid_parameter, "lambda1 must be positive");
    require(lr > 0.0 && batch >= 1 && epochs >= 1, ErrorKind::invalid_parameter, "GAN lr, batch and epochs");
    require(ngf >= 1 && ndf >= 1 && resblocks >= 0, ErrorKind::invalid_parameter, "GAN widths");
    require(input_size >= 8 && input_size % 8 == 0, ErrorKind::invalid_parameter,
            "discriminator input size must be a multiple of 8 and >= 8");
    require(buffer_size >= 0, ErrorKind::invalid_parameter, "buffer size must be >= 0");
    require(holdout > 0.0 && holdout < 1.0, ErrorKind::invalid_parameter, "holdout fraction must lie in (0, 1)");
}

nlohmann::json to_json(const GanConfig& c)
{
    return {{"lambda1", c.lambda1},       {"lr", c.lr},
            {"beta1", c.beta1},           {"batch", c.batch},
            {"epochs", c.epochs},         {"ngf", c.ngf},
            {"ndf", c.ndf},               {"resblocks", c.resblocks},
            {"input_size", c.input_size}, {"least_squares", c.least_squares},
            {"buffer_size", c.buffer_size}, {"holdout", c.holdout},
            {"seed", c.seed}};
}

GanConfig gan_config_from_json(const nlohmann::json& j)
{
    GanConfig c;
    try {
        c.lambda1 = j.at("lambda1").get<double>();
        c.lr = j.at("lr").get<double>();
        c.beta1 = j.at("beta1").get<double>();
        c.batch = j.at("batch").get<int>();
        c.epochs = j.at("epochs").get<int>();
        c.ngf = j.at("ngf").get<int>();
        c.ndf = j.at("ndf").get<int>();
        c.resblocks = j.at("resblocks").get<int>();
        c.input_size = j.at("input_size").get<int>();
        c.least_squares = j.at("least_squares").get<bool>();
        c.buffer_size = j.at("buffer_size").get<int>();
        c.holdout = j.at("holdout").get<double>();
        c.seed = j.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::invalid_checkpoint, std::string("GAN config: ") + e.what());
    }
    c.validate();
    return c;
}

ModelCheckpoint init_generator(const GanConfig& cfg, std::uint64_t seed)
{
    cfg.validate();
    ModelCheckpoint m;
    m.role = Role::generator_G;
    m.config = to_json(cfg);
    Rng rng(seed);
    const int f = cfg.ngf;
    init_conv(m.params, rng, "G/conv1", f, 3, 7);
    init_conv(m.params, rng, "G/conv2", 2 * f, f, 3);
    init_conv(m.params, rng, "G/conv3", 4 * f, 2 * f, 3);
    for (int r = 1; r <= cfg.resblocks; ++r) {
        init_conv(m.params, rng, res_name(r, 'a'), 4 * f, 4 * f, 3);
        init_conv(m.params, rng, res_name(r, 'b'), 4 * f, 4 * f, 3, 0.1);
    }
    init_conv_transpose(m.params, rng, "G/up1", 4 * f, 2 * f, 3);
    init_conv_transpose(m.params, rng, "G/up2", 2 * f, f, 3);
    init_conv(m.params, rng, "G/conv4", 3, f, 7, 0.5);
    return m;
}

ModelCheckpoint init_discriminator(const GanConfig& cfg, std::uint64_t seed)
{
    cfg.validate();
    ModelCheckpoint m;
    m.role = Role::discriminator_D;
    m.config = to_json(cfg);
    Rng rng(seed);
    const int f = cfg.ndf;
    init_conv(m.params, rng, "D/conv1", f, 3, 4);
    init_conv(m.params, rng, "D/conv2", 2 * f, f, 4);
    init_conv(m.params, rng, "D/conv3", 4 * f, 2 * f, 4);
    init_conv(m.params, rng, "D/conv4", 8 * f, 4 * f, 4);
    init_conv(m.params, rng, "D/conv5", 1, 8 * f, 4);
    return m;
}

GeneratorTrace generator_graph(const Scope& s, const GanConfig& cfg, Var y)
{
    Graph& g = s.g();
    const Tensor& in = g.value(y);
    require(in.rank() == 3 && in.channels() == 3 && in.height() % 4 == 0 && in.width() % 4 == 0, ErrorKind::shape,
            "generator input must be (3, H, W) with H, W divisible by 4, got " + shape_string(in.shape()));
    GeneratorTrace tr;
    auto relu = [&](Var v) { return ops::leaky_relu(g, v, 0.0); };
    Var t = relu(conv(s, "G/conv1", y));
    tr.stages.push_back(t);
    t = relu(conv(s, "G/conv2", t, {2, 1, 1, 1}));
    tr.stages.push_back(t);
    t = relu(conv(s, "G/conv3", t, {2, 1, 1, 1}));
    tr.stages.push_back(t);
    for (int r = 1; r <= cfg.resblocks; ++r) {
        Var a = relu(conv(s, res_name(r, 'a'), t));
        t = ops::add(g, t, conv(s, res_name(r, 'b'), a));
    }
    tr.stages.push_back(t);
    t = relu(ops::conv_transpose2d(g, t, s.p("G/up1.w"), s.p("G/up1.b"), 2, 1, 1));
    tr.stages.push_back(t);
    t = relu(ops::conv_transpose2d(g, t, s.p("G/up2.w"), s.p("G/up2.b"), 2, 1, 1));
    tr.stages.push_back(t);
    t = conv(s, "G/conv4", t);
    tr.stages.push_back(t);
    tr.output = ops::affine(g, ops::tanh(g, t), 0.5, 0.5);
    return tr;
}

Var discriminator_graph(const Scope& s, const GanConfig& cfg, Var x, std::vector<Var>* stages)
{
    Graph& g = s.g();
    const Tensor& in = g.value(x);
    require(in.rank() == 3 && in.channels() == 3 && in.height() == cfg.input_size && in.width() == cfg.input_size,
            ErrorKind::shape,
            "discriminator expects (3, " + std::to_string(cfg.input_size) + ", " + std::to_string(cfg.input_size)
                + "), got " + shape_string(in.shape()));
    const ConvSpec down{2, 1, 1, 1};
    const ConvSpec keep{1, 1, 2, 1};
    Var t = x;
    const char* names[] = {"D/conv1", "D/conv2", "D/conv3", "D/conv4", "D/conv5"};
    for (int i = 0; i < 5; ++i) {
        t = conv(s, names[i], t, i < 3 ? down : keep);
        if (stages)
            stages->push_back(t);
        if (i < 4)
            t = ops::leaky_relu(g, t, kDiscSlope);
    }
    return ops::global_avg_pool(g, t);
}

Tensor generator_forward(const ModelCheckpoint& gm, const Tensor& y)
{
    require_role(gm, {Role::generator_G}, "generator_forward");
    Graph g;
    Scope s{&g, &gm.params, kFrozen};
    return g.value(generator_graph(s, gan_config_from_json(gm.config), g.constant(y)).output);
}

double discriminator_forward(const ModelCheckpoint& dm, const Tensor& x)
{
    require_role(dm, {Role::discriminator_D}, "discriminator_forward");
    Graph g;
    Scope s{&g, &dm.params, kFrozen};
    return g.value(discriminator_graph(s, gan_config_from_json(dm.config), g.constant(x)))[0];
}

// --- objective ------------------------------------------------------------------------

GanLosses gan_losses(Graph& g, Var x1, Var y1, const Module& G, const Module& D, const Module& R, double lambda1,
                     bool least_squares, Var fake_for_d)
{
    require(lambda1 >= 0.0, ErrorKind::invalid_parameter, "lambda1 must be non-negative");
    GanLosses L;
    L.fake = G(g, y1);
    Var d_fake_g = D(g, L.fake);
    if (least_squares)
        L.adversarial = ops::mean(g, ops::square(g, ops::affine(g, d_fake_g, 1.0, -1.0)));
    else
        L.adversarial = ops::mean(g, ops::softplus(g, ops::scale(g, d_fake_g, -1.0)));
    L.cycle = ops::l1_loss(g, R(g, L.fake), y1);
    L.generator = ops::add(g, L.adversarial, ops::scale(g, L.cycle, lambda1));

    Var detached = fake_for_d.valid() ? fake_for_d : g.constant(g.value(L.fake));
    Var d_real = D(g, x1);
    Var d_fake = D(g, detached);
    if (least_squares) {
        Var real_term = ops::square(g, ops::affine(g, d_real, 1.0, -1.0));
        Var fake_term = ops::square(g, d_fake);
        L.discriminator = ops::scale(g, ops::mean(g, ops::add(g, real_term, fake_term)), 0.5);
    } else {
        Var real_term = ops::softplus(g, ops::scale(g, d_real, -1.0));
        Var fake_term = ops::softplus(g, d_fake);
        L.discriminator = ops::mean(g, ops::add(g, real_term, fake_term));
    }
    return L;
}

Module frozen_restorer(const ModelCheckpoint& r)
{
    require_role(r, {Role::base_R, Role::incremental}, "frozen restorer");
    const NetworkConfig cfg = network_config(r);
    const ParamSet* params = &r.params;
    return [params, cfg](Graph& g, Var x) {
        Scope s{&g, params, kFrozen};
        return base_graph(s, cfg, x).output;
    };
}

namespace {

// Pool of past generator outputs: until full it returns what it receives;
// afterwards it swaps the new image for a stored one half of the time.
class FakeBuffer {
public:
    FakeBuffer(int capacity, std::uint64_t seed) : capacity_(capacity), rng_(seed) {}

    Tensor query(const Tensor& fake)
    {
        if (capacity_ == 0)
            return fake;
        if (static_cast<int>(pool_.size()) < capacity_) {
            pool_.push_back(fake);
            return fake;
        }
        std::uniform_real_distribution<double> coin(0.0, 1.0);
        if (coin(rng_) < 0.5) {
            std::uniform_int_distribution<int> pick(0, capacity_ - 1);
            const int k = pick(rng_);
            Tensor old = pool_[k];
            pool_[k] = fake;
            return old;
        }
        return fake;
    }

private:
    int capacity_;
    Rng rng_;
    std::vector<Tensor> pool_;
};

double median(std::vector<double> v)
{
    if (v.empty())
        return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

} // namespace

GanResult train_gan(const std::vector<Tensor>& clean, const std::vector<Tensor>& distorted,
                    const ModelCheckpoint& r_frozen, const GanConfig& cfg)
{
    cfg.validate();
    require(clean.size() >= 2 && !distorted.empty(), ErrorKind::invalid_input,
            "train_gan needs at least two clean and one distorted patch");
    const Module R = frozen_restorer(r_frozen);

    GanResult res;
    res.generator = init_generator(cfg, mix_seed(cfg.seed, 1));
    res.discriminator = init_discriminator(cfg, mix_seed(cfg.seed, 2));
    ParamSet& gp = res.generator.params;
    ParamSet& dp = res.discriminator.params;
    ModelCheckpoint best = res.generator;
    double best_cycle = INFINITY;

    Rng rng(mix_seed(cfg.seed, 3));
    std::vector<std::size_t> order(clean.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t n_hold = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::lround(cfg.holdout * clean.size())), 1, clean.size() - 1);
    const std::vector<std::size_t> hold(order.end() - n_hold, order.end());
    std::vector<std::size_t> train(order.begin(), order.end() - n_hold);

    const Module Gm = [&](Graph& g, Var y) { return generator_graph(Scope{&g, &gp, kAll}, cfg, y).output; };
    const Module Dfrozen = [&](Graph& g, Var x) { return discriminator_graph(Scope{&g, &dp, kFrozen}, cfg, x); };
    const Module Dtrain = [&](Graph& g, Var x) { return discriminator_graph(Scope{&g, &dp, kAll}, cfg, x); };
    const Module Gfrozen = [&](Graph& g, Var y) { return generator_graph(Scope{&g, &gp, kFrozen}, cfg, y).output; };

    AdamConfig ac;
    ac.beta1 = cfg.beta1;
    Adam g_opt(ac), d_opt(ac);
    FakeBuffer buffer(cfg.buffer_size, mix_seed(cfg.seed, 4));
    std::vector<std::size_t> dist_order(distorted.size());
    std::iota(dist_order.begin(), dist_order.end(), 0);

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(train.begin(), train.end(), rng);
        std::shuffle(dist_order.begin(), dist_order.end(), rng);
        GanEpochLog log;
        log.epoch = epoch;
        std::vector<double> cycles;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < train.size(); start += cfg.batch) {
            const std::size_t end = std::min(train.size(), start + cfg.batch);
            const double inv = 1.0 / static_cast<double>(end - start);

            // generator step: D and R frozen, gradients flow through both
            GradMap g_grads;
            std::vector<Tensor> fakes;
            for (std::size_t k = start; k < end; ++k) {
                Graph g;
                Var y = g.constant(clean[train[k]]);
                Var x = g.constant(distorted[dist_order[k % distorted.size()]]);
                GanLosses L = gan_losses(g, x, y, Gm, Dfrozen, R, cfg.lambda1, cfg.least_squares);
                g.backward(L.generator);
                g.collect_grads(gp, g_grads);
                fakes.push_back(g.value(L.fake));
                log.g_adv += g.value(L.adversarial)[0];
                log.cycle += g.value(L.cycle)[0];
                cycles.push_back(g.value(L.cycle)[0]);
            }
            scale_grads(g_grads, inv);
            g_opt.step(gp, g_grads, cfg.lr);

            // discriminator step on real distorted patches and buffered fakes
            GradMap d_grads;
            for (std::size_t k = start; k < end; ++k) {
                Graph g;
                Var x = g.constant(distorted[dist_order[k % distorted.size()]]);
                Var f = g.constant(buffer.query(fakes[k - start]));
                Var d_real = Dtrain(g, x);
                Var d_fake = Dtrain(g, f);
                Var loss;
                if (cfg.least_squares) {
                    loss = ops::scale(g,
                                      ops::mean(g, ops::add(g, ops::square(g, ops::affine(g, d_real, 1.0, -1.0)),
                                                            ops::square(g, d_fake))),
                                      0.5);
                } else {
                    loss = ops::mean(g, ops::add(g, ops::softplus(g, ops::scale(g, d_real, -1.0)),
                                                 ops::softplus(g, d_fake)));
                }
                g.backward(loss);
                g.collect_grads(dp, d_grads);
                log.d_loss += g.value(loss)[0];
                log.d_real += g.value(d_real)[0];
                log.d_fake += g.value(d_fake)[0];
            }
            scale_grads(d_grads, inv);
            d_opt.step(dp, d_grads, cfg.lr);
            seen += end - start;
        }
        const double n = static_cast<double>(seen);
        log.d_loss /= n;
        log.g_adv /= n;
        log.cycle /= n;
        log.d_real /= n;
        log.d_fake /= n;
        log.cycle_median = median(cycles);

        double hc = 0.0;
        for (std::size_t k : hold) {
            Graph g;
            Var y = g.constant(clean[k]);
            hc += g.value(ops::l1_loss(g, R(g, Gfrozen(g, y)), y))[0];
        }
        log.holdout_cycle = hc / static_cast<double>(hold.size());
        if (log.holdout_cycle < best_cycle) {
            best_cycle = log.holdout_cycle;
            best = res.generator;
            best.step = epoch;
            res.best_epoch = epoch;
        }
        res.history.push_back(log);
    }
    res.discriminator.step = cfg.epochs;
    res.generator = std::move(best);
    res.generator.config["best_epoch"] = res.best_epoch;
    return res;
}

nlohmann::json to_json(const GanEpochLog& l)
{
    return {{"epoch", l.epoch},
            {"d_loss", l.d_loss},
            {"g_adv", l.g_adv},
            {"cycle", l.cycle},
            {"cycle_median", l.cycle_median},
            {"d_real", l.d_real},
            {"d_fake", l.d_fake},
            {"score_gap", l.d_real - l.d_fake},
            {"holdout_cycle", l.holdout_cycle}};
}

// --- pseudo pairs ---------------------------------------------------------------------------

std::vector<PseudoPair> synthesize_pseudo(const std::vector<ImagePatch>& y2, const ModelCheckpoint& g_star,
                                          const ModelCheckpoint& r_frozen)
{
    require_role(g_star, {Role::generator_G}, "synthesize_pseudo (generator)");
    require_role(r_frozen, {Role::base_R, Role::incremental}, "synthesize_pseudo (restorer)");
    char tag[32];
    std::snprintf(tag, sizeof(tag), "%016llx", static_cast<unsigned long long>(parameter_hash(g_star.params)));
    for (const auto& y : y2)
        require(y.pixels.rank() == 3 && y.pixels.channels() == 3 && y.height() % 4 == 0 && y.width() % 4 == 0,
                ErrorKind::shape, "pseudo source " + y.id + " must be (3, H, W) with H, W divisible by 4");
    std::vector<PseudoPair> out(y2.size());
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < y2.size(); ++i) {
        PseudoPair& p = out[i];
        p.x1_prime.pixels = generator_forward(g_star, y2[i].pixels);
        p.x1_prime = quantized(clamped(p.x1_prime));
        p.x1_prime.id = y2[i].id + "/x1p";
        p.y2_prime.pixels = base_forward(r_frozen, p.x1_prime.pixels).output;
        p.y2_prime = quantized(clamped(p.y2_prime));
        p.y2_prime.id = y2[i].id + "/y2p";
        p.provenance = "y2=" + y2[i].id + ";G=" + tag;
    }
    return out;
}

DatasetManifest write_pseudo_store(const std::vector<PseudoPair>& pairs, const std::filesystem::path& dir,
                                   std::uint64_t seed)
{
    std::filesystem::create_directories(dir / "clean");
    std::filesystem::create_directories(dir / "distorted");
    DatasetManifest m;
    m.task = "pseudo";
    m.seed = seed;
    if (!pairs.empty()) {
        m.patch = pairs[0].x1_prime.height();
        m.stride = m.patch;
    }
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "%06zu.png", i);
        ManifestEntry e;
        e.clean_path = std::string("clean/") + name;
        e.distorted_path = std::string("distorted/") + name;
        e.chain.severity = m.severity;
        e.chain.seed = mix_seed(seed, i);
        e.provenance = pairs[i].provenance;
        write_png(dir / e.clean_path, pairs[i].y2_prime);
        write_png(dir / e.distorted_path, pairs[i].x1_prime);
        m.entries.push_back(std::move(e));
    }
    write_manifest(m, dir);
    m.root = dir;
    return m;
}

std::size_t verify_pseudo_store(const DatasetManifest& store, const ModelCheckpoint& r_frozen)
{
    require(store.task == "pseudo", ErrorKind::invalid_input, "not a pseudo-pair store");
    const auto pairs = load_pairs(store);
    std::size_t mismatches = 0;
    for (const auto& p : pairs) {
        ImagePatch again;
        again.pixels = base_forward(r_frozen, p.distorted.pixels).output;
        again = quantized(clamped(again));
        if (max_abs_diff(again.pixels, p.clean.pixels) != 0.0)
            ++mismatches;
    }
    return mismatches;
}

} // namespace blend
