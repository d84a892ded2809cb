#include "cudanet/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "cudanet/errors.hpp"

namespace cudanet {
namespace {

struct BlobWriter {
  std::string bytes;

  nlohmann::json put(const torch::Tensor& t) {
    const auto c = t.detach().contiguous().cpu();
    const auto offset = bytes.size();
    bytes.append(static_cast<const char*>(c.data_ptr()), static_cast<size_t>(c.nbytes()));
    return {{"offset", offset}, {"bytes", c.nbytes()}, {"shape", c.sizes().vec()}};
  }
};

void read_into(const std::string& blob, const nlohmann::json& ref, torch::Tensor& dst, const std::string& what) {
  const auto offset = ref.at("offset").get<size_t>();
  const auto bytes = ref.at("bytes").get<size_t>();
  const auto shape = ref.at("shape").get<std::vector<int64_t>>();
  if (dst.sizes().vec() != shape || static_cast<size_t>(dst.nbytes()) != bytes) {
    throw DataError("checkpoint tensor " + what + " has an unexpected shape");
  }
  if (offset + bytes > blob.size()) throw DataError("checkpoint truncated at " + what);
  torch::NoGradGuard no_grad;
  std::memcpy(dst.data_ptr(), blob.data() + offset, bytes);
}

nlohmann::json dims_json(const ModelDims& d) {
  return {{"num_classes", d.num_classes}, {"content_dim", d.content_dim}, {"private_dim", d.private_dim}};
}

std::string dims_text(const ModelDims& d) {
  return "num_classes=" + std::to_string(d.num_classes) + " content_dim=" + std::to_string(d.content_dim) +
         " private_dim=" + std::to_string(d.private_dim);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const NetworkState& state, const nlohmann::json& config_echo) {
  BlobWriter blob;
  nlohmann::json header;
  header["format"] = std::string(kCheckpointMagic);
  header["stage"] = std::string(stage_name(state.stage));
  header["cycle_steps_done"] = state.cycle_steps_done;
  header["dims"] = dims_json(state.dims);
  header["seed"] = state.seed;
  header["dtype"] = std::string(c10::toString(state.dtype()));
  std::ostringstream rng_text;
  rng_text << state.rng;
  header["rng"] = rng_text.str();
  header["config"] = config_echo;
  nlohmann::json groups = nlohmann::json::array();
  for (const auto g : kAllGroups) {
    nlohmann::json jg;
    jg["name"] = std::string(group_name(g));
    jg["frozen"] = state.is_frozen(g);
    if (g >= ParamGroup::kStyS) {
      jg["trained"] = state.private_trained[static_cast<size_t>(g) - static_cast<size_t>(ParamGroup::kStyS)];
    }
    nlohmann::json params = nlohmann::json::array();
    for (const auto& item : state.module(g).named_parameters(true)) {
      auto ref = blob.put(item.value());
      ref["name"] = item.key();
      params.push_back(std::move(ref));
    }
    jg["parameters"] = std::move(params);
    const auto& opt = state.optimizers[static_cast<size_t>(g)];
    nlohmann::json jo = {{"steps", opt.steps}};
    jo["exp_avg"] = nlohmann::json::array();
    jo["exp_avg_sq"] = nlohmann::json::array();
    for (const auto& t : opt.exp_avg) jo["exp_avg"].push_back(blob.put(t));
    for (const auto& t : opt.exp_avg_sq) jo["exp_avg_sq"].push_back(blob.put(t));
    jg["optimizer"] = std::move(jo);
    groups.push_back(std::move(jg));
  }
  header["groups"] = std::move(groups);

  const std::string text = header.dump();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << kCheckpointMagic << '\n';
    std::uint64_t len = text.size();
    unsigned char le[8];
    for (int i = 0; i < 8; ++i) le[i] = static_cast<unsigned char>((len >> (8 * i)) & 0xFF);
    out.write(reinterpret_cast<const char*>(le), 8);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.write(blob.bytes.data(), static_cast<std::streamsize>(blob.bytes.size()));
    if (!out) throw DataError("cannot write checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const std::optional<ModelDims>& expected_dims) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PrerequisiteError("checkpoint not found: " + path.string());
  std::string magic;
  std::getline(in, magic);
  if (magic != kCheckpointMagic) {
    throw DataError("not a " + std::string(kCheckpointMagic) + " checkpoint: " + path.string());
  }
  unsigned char le[8];
  in.read(reinterpret_cast<char*>(le), 8);
  std::uint64_t len = 0;
  for (int i = 0; i < 8; ++i) len |= static_cast<std::uint64_t>(le[i]) << (8 * i);
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw DataError("checkpoint header truncated: " + path.string());
  std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("corrupt checkpoint header in " + path.string() + ": " + e.what());
  }

  try {
    ModelDims dims;
    dims.num_classes = header.at("dims").at("num_classes").get<int>();
    dims.content_dim = header.at("dims").at("content_dim").get<int>();
    dims.private_dim = header.at("dims").at("private_dim").get<int>();
    if (expected_dims && *expected_dims != dims) {
      throw ConfigError("checkpoint " + path.string() + " (" + std::string(kCheckpointMagic) + ") holds a model with " +
                        dims_text(dims) + " but the configuration asks for " + dims_text(*expected_dims));
    }
    NetworkState state(dims, header.at("seed").get<std::uint64_t>());
    const auto dtype_name = header.at("dtype").get<std::string>();
    if (dtype_name == "Double") state.to(torch::kFloat64);
    state.stage = parse_stage(header.at("stage").get<std::string>());
    state.cycle_steps_done = header.at("cycle_steps_done").get<int>();
    std::istringstream rng_text(header.at("rng").get<std::string>());
    rng_text >> state.rng;

    const auto& groups = header.at("groups");
    if (groups.size() != kNumGroups) throw DataError("checkpoint lists the wrong number of parameter groups");
    for (const auto& jg : groups) {
      const auto g = parse_group(jg.at("name").get<std::string>());
      state.frozen[static_cast<size_t>(g)] = jg.at("frozen").get<bool>();
      if (g >= ParamGroup::kStyS) {
        state.private_trained[static_cast<size_t>(g) - static_cast<size_t>(ParamGroup::kStyS)] = jg.at("trained").get<bool>();
      }
      auto named = state.module(g).named_parameters(true);
      const auto& params = jg.at("parameters");
      if (params.size() != named.size()) throw DataError("checkpoint group " + std::string(group_name(g)) + " is incomplete");
      size_t i = 0;
      for (auto& item : named) {
        const auto& ref = params.at(i++);
        if (ref.at("name").get<std::string>() != item.key()) {
          throw DataError("checkpoint parameter order mismatch in " + std::string(group_name(g)));
        }
        read_into(blob, ref, item.value(), std::string(group_name(g)) + "." + item.key());
      }
      auto& opt = state.optimizers[static_cast<size_t>(g)];
      const auto& jo = jg.at("optimizer");
      opt.steps = jo.at("steps").get<std::int64_t>();
      const auto param_list = state.parameters(g);
      for (const auto& key : {"exp_avg", "exp_avg_sq"}) {
        auto& slots = std::string(key) == "exp_avg" ? opt.exp_avg : opt.exp_avg_sq;
        const auto& refs = jo.at(key);
        if (!refs.empty() && refs.size() != param_list.size()) throw DataError("checkpoint optimizer state is incomplete");
        for (size_t k = 0; k < refs.size(); ++k) {
          auto t = torch::zeros_like(param_list[k]).set_requires_grad(false);
          read_into(blob, refs[k], t, std::string(group_name(g)) + ".optimizer");
          slots.push_back(t);
        }
      }
    }
    state.apply_frozen_flags();
    return LoadedCheckpoint{std::move(state), header.at("config")};
  } catch (const nlohmann::json::exception& e) {
    throw DataError("corrupt checkpoint " + path.string() + ": " + e.what());
  }
}

}  // namespace cudanet
