#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "contrax/common.hpp"
#include "contrax/corpus.hpp"
#include "contrax/encoder.hpp"

namespace contrax {

// Architecture sizes. The defaults are desk-scale; the encoder stand-in is far
// smaller than a pre-trained language model.
struct ModelSpec {
  std::size_t vocab_cap = 8000;
  std::size_t max_len = kDefaultMaxLen;
  std::size_t token_dim = 64;
  std::size_t hidden_dim = 128;
  std::size_t embed_dim = 64;
  std::size_t head_hidden_dim = 128;
  double dropout = kDefaultDropout;
};

// p = encoder followed by classifier head, plus the token vocabulary and the
// author labels the head predicts.
template <DocumentEncoder Encoder>
struct BasicModel {
  TokenVocabulary vocab;
  Encoder encoder;
  ClassifierHead head;
  std::vector<std::string> authors;
  std::uint64_t init_seed = 0;

  std::size_t num_classes() const { return authors.size(); }

  std::vector<TensorView> tensors() {
    auto out = encoder.tensors();
    auto h = head.tensors();
    out.insert(out.end(), h.begin(), h.end());
    return out;
  }

  void bump_version() {
    encoder.bump_version();
    head.bump_version();
  }
};

using Model = BasicModel<MeanPoolEncoder>;

// Builds the vocabulary from `train` and initializes parameters from `seed`.
inline Model make_model(const Corpus& train, const ModelSpec& spec, std::uint64_t seed) {
  Model m;
  m.vocab = build_token_vocab(train, spec.vocab_cap, spec.max_len);
  m.authors = train.authors();
  m.init_seed = seed;
  EncoderConfig ec{m.vocab.size(), spec.token_dim, spec.hidden_dim, spec.embed_dim};
  m.encoder = MeanPoolEncoder::initialized(ec, mix_seed(seed, 1));
  HeadConfig hc{spec.embed_dim, spec.head_hidden_dim, m.authors.size(), spec.dropout};
  m.head = ClassifierHead::initialized(hc, mix_seed(seed, 2));
  return m;
}

// ---------------------------------------------------------------------------
// Checkpoints: <prefix>.json metadata plus <prefix>.bin, the concatenated
// parameter tensors as little-endian IEEE-754 doubles.

inline constexpr int kCheckpointFormat = 1;

namespace detail {

inline std::uint64_t to_little_endian(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xFF) << (8 * (7 - i));
    return r;
  }
  return v;
}

}  // namespace detail

template <DocumentEncoder Encoder>
void save_checkpoint(const std::string& prefix, BasicModel<Encoder>& model,
                     const nlohmann::ordered_json& extra = nlohmann::ordered_json::object()) {
  std::string blob;
  nlohmann::ordered_json tensors = nlohmann::ordered_json::array();
  for (const auto& t : model.tensors()) {
    tensors.push_back({{"name", t.name}, {"rows", t.rows}, {"cols", t.cols}, {"offset", blob.size()}});
    for (double x : t.data) {
      const std::uint64_t bits = detail::to_little_endian(std::bit_cast<std::uint64_t>(x));
      char bytes[8];
      std::memcpy(bytes, &bits, 8);
      blob.append(bytes, 8);
    }
  }
  Fnv1a blob_hash;
  blob_hash.update(blob);

  const auto& hc = model.head.config();
  nlohmann::ordered_json meta;
  meta["format"] = kCheckpointFormat;
  meta["encoder"] = model.encoder.config_json();
  meta["head"] = {{"embed_dim", hc.embed_dim},
                  {"hidden_dim", hc.hidden_dim},
                  {"num_classes", hc.num_classes},
                  {"dropout", hc.dropout}};
  meta["init_seed"] = model.init_seed;
  meta["authors"] = model.authors;
  meta["vocab"] = {{"max_len", model.vocab.max_len},
                   {"size", model.vocab.size()},
                   {"hash", hex64(model.vocab.checksum())},
                   {"tokens", model.vocab.tokens}};
  meta["tensors"] = tensors;
  meta["blob_bytes"] = blob.size();
  meta["blob_hash"] = hex64(blob_hash.digest());
  meta["extra"] = extra;

  std::ofstream js(prefix + ".json", std::ios::binary);
  std::ofstream bin(prefix + ".bin", std::ios::binary);
  if (!js || !bin) throw Error("cannot write checkpoint '" + prefix + "'");
  js << meta.dump(2) << '\n';
  bin.write(blob.data(), static_cast<std::streamsize>(blob.size()));
}

// Strips a trailing .json or .bin so either file of the pair names the checkpoint.
inline std::string checkpoint_prefix(std::string path) {
  for (const char* ext : {".json", ".bin"}) {
    if (path.ends_with(ext)) return path.substr(0, path.size() - std::strlen(ext));
  }
  return path;
}

template <DocumentEncoder Encoder = MeanPoolEncoder>
BasicModel<Encoder> load_checkpoint(const std::string& path, nlohmann::json* extra = nullptr) {
  const std::string prefix = checkpoint_prefix(path);
  std::ifstream js(prefix + ".json", std::ios::binary);
  if (!js) throw Error("cannot open checkpoint metadata '" + prefix + ".json'");
  std::ifstream bin(prefix + ".bin", std::ios::binary);
  if (!bin) throw Error("cannot open checkpoint blob '" + prefix + ".bin'");
  const std::string blob((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());

  BasicModel<Encoder> m;
  try {
    const auto meta = nlohmann::json::parse(js);
    if (meta.at("format").get<int>() != kCheckpointFormat) throw Error("unsupported checkpoint format");
    if (meta.at("blob_bytes").get<std::size_t>() != blob.size()) throw Error("blob size mismatch");
    Fnv1a h;
    h.update(blob);
    if (meta.at("blob_hash").get<std::string>() != hex64(h.digest())) throw Error("blob checksum mismatch");

    m.encoder = Encoder::from_config_json(meta.at("encoder"));
    const auto& hj = meta.at("head");
    HeadConfig hc{hj.at("embed_dim").get<std::size_t>(), hj.at("hidden_dim").get<std::size_t>(),
                  hj.at("num_classes").get<std::size_t>(), hj.at("dropout").get<double>()};
    m.head = ClassifierHead(hc);
    m.init_seed = meta.at("init_seed").get<std::uint64_t>();
    m.authors = meta.at("authors").get<std::vector<std::string>>();
    m.vocab.max_len = meta.at("vocab").at("max_len").get<std::size_t>();
    m.vocab.tokens = meta.at("vocab").at("tokens").get<std::vector<std::string>>();
    m.vocab.rebuild_index();
    if (meta.at("vocab").at("hash").get<std::string>() != hex64(m.vocab.checksum())) {
      throw Error("vocabulary hash mismatch");
    }
    if (hc.num_classes != m.authors.size()) throw Error("head size does not match author count");

    auto views = m.tensors();
    const auto& tj = meta.at("tensors");
    if (tj.size() != views.size()) throw Error("tensor count mismatch");
    for (std::size_t k = 0; k < views.size(); ++k) {
      const auto& d = tj[k];
      if (d.at("name").get<std::string>() != views[k].name ||
          d.at("rows").get<std::size_t>() != views[k].rows ||
          d.at("cols").get<std::size_t>() != views[k].cols) {
        throw Error("tensor '" + views[k].name + "' layout mismatch");
      }
      const std::size_t offset = d.at("offset").get<std::size_t>();
      if (offset + views[k].data.size() * 8 > blob.size()) throw Error("tensor data out of range");
      for (std::size_t i = 0; i < views[k].data.size(); ++i) {
        std::uint64_t bits;
        std::memcpy(&bits, blob.data() + offset + 8 * i, 8);
        views[k].data[i] = std::bit_cast<double>(detail::to_little_endian(bits));
      }
    }
    if (extra) *extra = meta.value("extra", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw Error("checkpoint '" + prefix + "': " + e.what());
  } catch (const Error& e) {
    throw Error("checkpoint '" + prefix + "': " + e.what());
  }
  return m;
}

}  // namespace contrax
