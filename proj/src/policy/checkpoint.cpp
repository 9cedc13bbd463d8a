#include <bit>
#include <cstring>

#include "rulealign/common.hpp"
#include "rulealign/transformer.hpp"

namespace rulealign::policy {
namespace {

constexpr std::string_view kMagic = "RALCKPT1\n";

static_assert(std::endian::native == std::endian::little, "checkpoint payload assumes little-endian doubles");

void append_doubles(std::string& out, std::span<const double> v) {
    const auto at = out.size();
    out.resize(at + v.size() * sizeof(double));
    std::memcpy(out.data() + at, v.data(), v.size() * sizeof(double));
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const TransformerPolicy& policy, const CheckpointMeta& meta) {
    json tensors = json::array();
    for (const auto& t : policy.tensors()) {
        tensors.push_back({{"name", t.name}, {"offset", t.offset}, {"rows", t.rows}, {"cols", t.cols}});
    }
    json header{{"format", 1},
                {"architecture", architecture_to_json(policy.architecture())},
                {"tokenizer", policy.tokenizer().to_json()},
                {"tensors", tensors},
                {"phase", meta.phase},
                {"parent_hash", meta.parent_hash},
                {"extra", meta.extra},
                {"base_count", policy.parameter_count()},
                {"adapter_count", policy.adapter_params().size()}};
    if (policy.lora()) {
        header["lora"] = {{"rank", policy.lora()->rank}, {"alpha", policy.lora()->alpha}};
    } else {
        header["lora"] = nullptr;
    }
    std::string out(kMagic);
    out += header.dump();
    out += '\n';
    append_doubles(out, policy.params());
    append_doubles(out, policy.adapter_params());
    write_text_atomic(path, out);
}

void export_weights(const std::filesystem::path& path, const TransformerPolicy& policy) {
    const auto eff = policy.effective();
    json tensors = json::object();
    for (const auto& t : policy.tensors()) {
        tensors[t.name] = {{"rows", t.rows},
                           {"cols", t.cols},
                           {"data", std::vector<double>(eff.begin() + static_cast<std::ptrdiff_t>(t.offset),
                                                        eff.begin() + static_cast<std::ptrdiff_t>(t.offset + t.size()))}};
    }
    const json doc{{"architecture", architecture_to_json(policy.architecture())}, {"tensors", tensors}};
    write_text_atomic(path, doc.dump() + "\n");
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    const auto bytes = read_text(path);
    if (bytes.compare(0, kMagic.size(), kMagic) != 0) {
        throw DataError(path.string() + ": not a checkpoint file");
    }
    const auto nl = bytes.find('\n', kMagic.size());
    if (nl == std::string::npos) {
        throw DataError(path.string() + ": truncated checkpoint header");
    }
    json header;
    try {
        header = json::parse(bytes.substr(kMagic.size(), nl - kMagic.size()));
    } catch (const json::exception& e) {
        throw DataError(path.string() + ": bad checkpoint header: " + e.what());
    }
    const auto base_count = header.at("base_count").get<std::size_t>();
    const auto adapter_count = header.at("adapter_count").get<std::size_t>();
    const auto payload = bytes.size() - nl - 1;
    if (payload != (base_count + adapter_count) * sizeof(double)) {
        throw DataError(path.string() + ": payload size does not match the header");
    }
    auto policy = std::make_unique<TransformerPolicy>(Tokenizer::from_json(header.at("tokenizer")),
                                                      architecture_from_json(header.at("architecture")),
                                                      InitConfig{0, 0.0, true});
    if (policy->parameter_count() != base_count) {
        throw DataError(path.string() + ": parameter count does not match the architecture");
    }
    const char* data = bytes.data() + nl + 1;
    std::memcpy(policy->params().data(), data, base_count * sizeof(double));
    if (!header.at("lora").is_null()) {
        LoraConfig cfg{header["lora"].at("rank").get<std::size_t>(), header["lora"].at("alpha").get<double>()};
        policy->attach_adapters(cfg, 0);
        if (policy->adapter_params().size() != adapter_count) {
            throw DataError(path.string() + ": adapter count does not match the header");
        }
        std::memcpy(policy->adapter_params().data(), data + base_count * sizeof(double),
                    adapter_count * sizeof(double));
    }
    policy->refresh();

    LoadedCheckpoint out;
    out.policy = std::move(policy);
    out.meta.phase = header.value("phase", "base");
    out.meta.parent_hash = header.value("parent_hash", "");
    out.meta.extra = header.value("extra", json::object());
    out.hash = sha256_hex(bytes);
    return out;
}

std::string checkpoint_hash(const std::filesystem::path& path) { return sha256_hex(read_text(path)); }

}  // namespace rulealign::policy
