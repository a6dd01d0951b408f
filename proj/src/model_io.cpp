#include "file_bytes.hpp"
#include "model_common.hpp"
#include "segqual/error.hpp"

namespace segqual {
namespace {

constexpr std::string_view kMagic = "SQMM";
constexpr std::uint8_t kVersion = 1;
constexpr std::uint64_t kMaxCount = std::uint64_t{1} << 32;

enum class Tag : std::uint8_t { Linear = 0, Ensemble = 1, Network = 2 };

void put_vector(detail::ByteWriter& w, const Eigen::VectorXd& v) {
    w.u64(static_cast<std::uint64_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) w.f64(v[i]);
}

std::uint64_t get_count(detail::ByteReader& r) {
    const std::uint64_t n = r.u64();
    // Each element takes at least one byte, so larger counts are corrupt.
    if (n > kMaxCount || n > r.remaining()) throw Error(ErrorCode::DimMismatch, "implausible element count");
    return n;
}

Eigen::VectorXd get_vector(detail::ByteReader& r) {
    const auto n = static_cast<Eigen::Index>(get_count(r));
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = r.f64();
    return v;
}

}  // namespace

std::vector<std::uint8_t> serialize_model(const MetaModel& m) {
    detail::ByteWriter w;
    w.bytes(kMagic);
    w.u8(kVersion);
    w.u8(static_cast<std::uint8_t>(m.family));
    w.u8(static_cast<std::uint8_t>(m.task));
    w.u8(static_cast<std::uint8_t>(m.hp.activation));
    w.u64(m.seed);

    const Hyperparameters& hp = m.hp;
    w.f64(hp.lambda);
    w.i32(hp.trees);
    w.i32(hp.depth);
    w.f64(hp.shrinkage);
    w.f64(hp.subsample);
    w.i32(hp.min_leaf);
    w.i32(hp.hidden);
    w.f64(hp.learning_rate);
    w.i32(hp.batch);
    w.i32(hp.max_epochs);
    w.i32(hp.patience);

    put_vector(w, m.stats.mean);
    put_vector(w, m.stats.scale);

    if (const auto* lin = std::get_if<LinearParams>(&m.params)) {
        w.u8(static_cast<std::uint8_t>(Tag::Linear));
        w.f64(lin->intercept);
        put_vector(w, lin->weights);
    } else if (const auto* ens = std::get_if<TreeEnsemble>(&m.params)) {
        w.u8(static_cast<std::uint8_t>(Tag::Ensemble));
        w.f64(ens->base);
        w.f64(ens->shrinkage);
        w.u64(ens->trees.size());
        for (const RegressionTree& tree : ens->trees) {
            w.u64(tree.nodes.size());
            for (const TreeNode& node : tree.nodes) {
                w.i32(node.feature);
                w.f64(node.threshold);
                w.i32(node.left);
                w.i32(node.right);
                w.f64(node.value);
            }
        }
    } else {
        const auto& net = std::get<NetworkParams>(m.params);
        w.u8(static_cast<std::uint8_t>(Tag::Network));
        w.u64(static_cast<std::uint64_t>(net.w1.rows()));
        w.u64(static_cast<std::uint64_t>(net.w1.cols()));
        for (Eigen::Index i = 0; i < net.w1.rows(); ++i) {
            for (Eigen::Index j = 0; j < net.w1.cols(); ++j) w.f64(net.w1(i, j));
        }
        for (Eigen::Index i = 0; i < net.b1.size(); ++i) w.f64(net.b1[i]);
        for (Eigen::Index i = 0; i < net.w2.size(); ++i) w.f64(net.w2[i]);
        w.f64(net.b2);
    }
    return w.take();
}

MetaModel deserialize_model(std::span<const std::uint8_t> bytes) {
    detail::ByteReader r(bytes, ErrorCode::DimMismatch);
    for (char c : kMagic) {
        if (r.remaining() == 0 || r.u8() != static_cast<std::uint8_t>(c)) {
            throw Error(ErrorCode::BadMagic, "not a model file");
        }
    }
    if (r.u8() != kVersion) throw Error(ErrorCode::BadVersion, "unsupported model version");
    MetaModel m;
    const std::uint8_t family = r.u8();
    const std::uint8_t task = r.u8();
    const std::uint8_t activation = r.u8();
    if (family > static_cast<std::uint8_t>(Family::NN_L2) || task > 1 || activation > 1) {
        throw Error(ErrorCode::InvalidArgument, "bad model tag");
    }
    m.family = static_cast<Family>(family);
    m.task = static_cast<Task>(task);
    m.hp.activation = static_cast<Activation>(activation);
    m.seed = r.u64();

    Hyperparameters& hp = m.hp;
    hp.lambda = r.f64();
    hp.trees = r.i32();
    hp.depth = r.i32();
    hp.shrinkage = r.f64();
    hp.subsample = r.f64();
    hp.min_leaf = r.i32();
    hp.hidden = r.i32();
    hp.learning_rate = r.f64();
    hp.batch = r.i32();
    hp.max_epochs = r.i32();
    hp.patience = r.i32();

    m.stats.mean = get_vector(r);
    m.stats.scale = get_vector(r);
    if (m.stats.mean.size() != m.stats.scale.size()) throw Error(ErrorCode::DimMismatch, "standardizer sizes");
    const Eigen::Index dim = m.stats.dim();

    switch (static_cast<Tag>(r.u8())) {
        case Tag::Linear: {
            LinearParams lin;
            lin.intercept = r.f64();
            lin.weights = get_vector(r);
            if (lin.weights.size() != dim) throw Error(ErrorCode::DimMismatch, "weight count");
            m.params = std::move(lin);
            break;
        }
        case Tag::Ensemble: {
            TreeEnsemble ens;
            ens.base = r.f64();
            ens.shrinkage = r.f64();
            const std::uint64_t trees = get_count(r);
            for (std::uint64_t t = 0; t < trees; ++t) {
                RegressionTree tree;
                const auto nodes = static_cast<std::int64_t>(get_count(r));
                if (nodes == 0) throw Error(ErrorCode::DimMismatch, "empty tree");
                tree.nodes.resize(static_cast<std::size_t>(nodes));
                for (std::int64_t q = 0; q < nodes; ++q) {
                    TreeNode& node = tree.nodes[static_cast<std::size_t>(q)];
                    node.feature = r.i32();
                    node.threshold = r.f64();
                    node.left = r.i32();
                    node.right = r.i32();
                    node.value = r.f64();
                    // Children must point forward so evaluation terminates.
                    if (node.feature >= 0 && (node.feature >= dim || node.left <= q || node.right <= q ||
                                              node.left >= nodes || node.right >= nodes)) {
                        throw Error(ErrorCode::DimMismatch, "malformed tree node");
                    }
                }
                ens.trees.push_back(std::move(tree));
            }
            m.params = std::move(ens);
            break;
        }
        case Tag::Network: {
            NetworkParams net;
            const auto h = static_cast<Eigen::Index>(get_count(r));
            const auto d = static_cast<Eigen::Index>(get_count(r));
            if (d != dim || static_cast<std::uint64_t>(h) * static_cast<std::uint64_t>(d) * 8 > r.remaining()) {
                throw Error(ErrorCode::DimMismatch, "network shape");
            }
            net.w1.resize(h, d);
            for (Eigen::Index i = 0; i < h; ++i) {
                for (Eigen::Index j = 0; j < d; ++j) net.w1(i, j) = r.f64();
            }
            net.b1.resize(h);
            for (Eigen::Index i = 0; i < h; ++i) net.b1[i] = r.f64();
            net.w2.resize(h);
            for (Eigen::Index i = 0; i < h; ++i) net.w2[i] = r.f64();
            net.b2 = r.f64();
            m.params = std::move(net);
            break;
        }
        default: throw Error(ErrorCode::InvalidArgument, "unknown parameter tag");
    }
    if (r.remaining() != 0) throw Error(ErrorCode::DimMismatch, "trailing bytes in model file");
    return m;
}

void save_model(const MetaModel& model, const std::filesystem::path& path) {
    detail::write_file(serialize_model(model), path);
}

MetaModel load_model(const std::filesystem::path& path) { return deserialize_model(detail::read_file(path)); }

}  // namespace segqual
