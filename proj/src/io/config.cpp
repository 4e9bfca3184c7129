#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "json.hpp"
#include "starnet/error.hpp"
#include "starnet/io.hpp"

namespace starnet {

using nlohmann::json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Reads keys of one JSON object and rejects any key it was not asked about.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "expected an object");
  }

  template <typename T>
  void get(const char* key, T& dst) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    dst = convert<T>(*it, where(key));
  }

  // Null reads as +/- infinity for open bounds.
  void get_bound(const char* key, double& dst, double open) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    dst = it->is_null() ? open : convert<double>(*it, where(key));
  }

  const json* child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) fail(where(it.key()), "unknown key");
    }
  }

  [[noreturn]] static void fail(const std::string& path, const std::string& why) {
    throw Error(ErrorCode::kConfig, "config " + (path.empty() ? std::string("<root>") : path) + ": " + why);
  }

  template <typename T>
  static T convert(const json& v, const std::string& path) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) fail(path, "expected true or false");
      return v.get<bool>();
    } else if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T>) {
      if (!v.is_number_unsigned()) fail(path, "expected a nonnegative integer");
      return v.get<T>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) fail(path, "expected an integer");
      return v.get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) fail(path, "expected a number");
      return v.get<T>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) fail(path, "expected a string");
      return v.get<std::string>();
    } else {
      if (!v.is_array()) fail(path, "expected an array");
      T out;
      for (std::size_t i = 0; i < v.size(); ++i) {
        out.push_back(convert<typename T::value_type>(v[i], path + "[" + std::to_string(i) + "]"));
      }
      return out;
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

SizeRange size_range(const json& v, const std::string& path) {
  const auto pair = Section::convert<std::vector<double>>(v, path);
  if (pair.size() != 2) Section::fail(path, "expected [lo, hi]");
  return {pair[0], pair[1]};
}

// ---------------------------------------------------------------------------
// Readers

template <typename Fn>
void for_each_in_array(const json* arr, const std::string& path, Fn fn) {
  if (!arr) return;
  if (!arr->is_array()) Section::fail(path, "expected an array");
  for (std::size_t i = 0; i < arr->size(); ++i) fn((*arr)[i], path + "[" + std::to_string(i) + "]");
}

void read_scene(const json& j, const std::string& path, SceneGenConfig& c) {
  Section s(j, path);
  s.get("extent", c.extent);
  s.get("ground_density", c.ground_density);
  s.get("ground_noise", c.ground_noise);
  s.get("ground_intensity", c.ground_intensity);
  s.get("min_separation", c.min_separation);
  s.get("feature_dim", c.feature_dim);
  s.get("ego_speed_max", c.ego_speed_max);
  s.get("ego_yaw_rate_max", c.ego_yaw_rate_max);
  s.get("max_placement_attempts", c.max_placement_attempts);
  if (const json* objs = s.child("objects")) {
    c.objects.clear();
    for_each_in_array(objs, s.where("objects"), [&](const json& o, const std::string& p) {
      ObjectSpec spec;
      Section os(o, p);
      os.get("name", spec.name);
      os.get("class_id", spec.class_id);
      os.get("count_min", spec.count_min);
      os.get("count_max", spec.count_max);
      if (const json* v = os.child("length")) spec.length = size_range(*v, os.where("length"));
      if (const json* v = os.child("width")) spec.width = size_range(*v, os.where("width"));
      if (const json* v = os.child("height")) spec.height = size_range(*v, os.where("height"));
      os.get("points_min", spec.points_min);
      os.get("points_max", spec.points_max);
      os.get("intensity_mean", spec.intensity_mean);
      os.get("intensity_std", spec.intensity_std);
      os.get("speed_max", spec.speed_max);
      os.finish();
      c.objects.push_back(spec);
    });
  }
  s.finish();
}

void read_model(const json& j, const std::string& path, ModelConfig& c) {
  Section s(j, path);
  s.get("crop_radius", c.crop_radius);
  s.get("feature_dim", c.feature_dim);
  if (const json* f = s.child("featurizer")) {
    Section fs(*f, s.where("featurizer"));
    fs.get("input_dim", c.featurizer.input_dim);
    fs.get("block_widths", c.featurizer.block_widths);
    fs.get("bn_momentum", c.featurizer.bn_momentum);
    fs.get("bn_epsilon", c.featurizer.bn_epsilon);
    fs.finish();
  }
  if (const json* a = s.child("anchors")) {
    Section as(*a, s.where("anchors"));
    as.get("grid_size", c.anchors.grid_size);
    as.get("grid_extent", c.anchors.grid_extent);
    as.get("rotations", c.anchors.rotations);
    as.get("proj_dim", c.anchors.proj_dim);
    if (const json* priors = as.child("priors")) {
      c.anchors.priors.clear();
      for_each_in_array(priors, as.where("priors"), [&](const json& o, const std::string& p) {
        DimPrior prior;
        Section ps(o, p);
        ps.get("length", prior.length);
        ps.get("width", prior.width);
        ps.get("height", prior.height);
        ps.get("z", prior.z);
        ps.get("class_id", prior.class_id);
        ps.finish();
        c.anchors.priors.push_back(prior);
      });
    }
    as.finish();
  }
  s.finish();
}

SamplerKind read_sampler(Section& s) {
  std::string name;
  s.get("sampler", name);
  try {
    return parse_sampler(name);
  } catch (const Error& e) {
    Section::fail(s.where("sampler"), "expected \"fps\" or \"random\"");
  }
}

void read_train(const json& j, const std::string& path, TrainConfig& c) {
  Section s(j, path);
  s.get("lr0", c.lr0);
  s.get("lr_decay", c.lr_decay);
  s.get("decay_steps", c.decay_steps);
  s.get("epochs", c.epochs);
  s.get("batch_frames", c.batch_frames);
  s.get("centers_per_frame", c.centers_per_frame);
  s.get("points_per_crop", c.points_per_crop);
  if (j.contains("sampler")) c.sampler = read_sampler(s);
  s.get_bound("z_min", c.z_range.z_min, -kInf);
  s.get_bound("z_max", c.z_range.z_max, kInf);
  s.get("validate_every", c.validate_every);
  s.get("seed", c.seed);
  s.get("workers", c.workers);
  if (const json* l = s.child("loss")) {
    Section ls(*l, s.where("loss"));
    ls.get("focal_alpha", c.loss.focal_alpha);
    ls.get("focal_gamma", c.loss.focal_gamma);
    ls.get("smooth_l1_delta", c.loss.smooth_l1_delta);
    ls.get("cls_weight", c.loss.cls_weight);
    ls.get("loc_weight", c.loss.loc_weight);
    std::string heading = c.loss.heading == HeadingLossMode::kSine ? "sine" : "wrapped";
    ls.get("heading", heading);
    if (heading == "sine") {
      c.loss.heading = HeadingLossMode::kSine;
    } else if (heading == "wrapped") {
      c.loss.heading = HeadingLossMode::kWrapped;
    } else {
      Section::fail(ls.where("heading"), "expected \"sine\" or \"wrapped\"");
    }
    ls.finish();
  }
  if (const json* m = s.child("matching")) {
    Section ms(*m, s.where("matching"));
    ms.get("foreground_iou", c.matching.foreground_iou);
    ms.get("background_iou", c.matching.background_iou);
    ms.get("force_match", c.matching.force_match);
    ms.finish();
  }
  if (const json* a = s.child("adam")) {
    Section as(*a, s.where("adam"));
    as.get("beta1", c.adam.beta1);
    as.get("beta2", c.adam.beta2);
    as.get("epsilon", c.adam.epsilon);
    as.finish();
  }
  s.finish();
}

void read_inference(const json& j, const std::string& path, InferenceConfig& c) {
  Section s(j, path);
  s.get("num_centers", c.num_centers);
  s.get("points_per_crop", c.points_per_crop);
  if (j.contains("sampler")) c.sampler = read_sampler(s);
  s.get("temporal_seed_count", c.temporal_seed_count);
  s.get("min_score", c.min_score);
  s.get("nms_iou", c.nms_iou);
  s.get("max_detections", c.max_detections);
  s.get_bound("z_min", c.z_range.z_min, -kInf);
  s.get_bound("z_max", c.z_range.z_max, kInf);
  s.get("seed", c.seed);
  s.get("workers", c.workers);
  s.get("chunk_size", c.chunk_size);
  s.finish();
}

void read_eval(const json& j, const std::string& path, EvalConfig& c) {
  Section s(j, path);
  s.get("iou_threshold", c.iou_threshold);
  s.get("use_3d_iou", c.use_3d_iou);
  s.get("min_points", c.min_points);
  s.get("recall_sample_points", c.recall_sample_points);
  if (const json* buckets = s.child("range_buckets")) {
    c.range_buckets.clear();
    for_each_in_array(buckets, s.where("range_buckets"), [&](const json& o, const std::string& p) {
      RangeBucket b;
      Section bs(o, p);
      bs.get("name", b.name);
      bs.get("lo", b.lo);
      bs.get_bound("hi", b.hi, kInf);
      bs.finish();
      c.range_buckets.push_back(b);
    });
  }
  s.finish();
}

// ---------------------------------------------------------------------------
// Writers

json bound(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json scene_json(const SceneGenConfig& c) {
  json objects = json::array();
  for (const ObjectSpec& o : c.objects) {
    objects.push_back({{"name", o.name},
                       {"class_id", o.class_id},
                       {"count_min", o.count_min},
                       {"count_max", o.count_max},
                       {"length", {o.length.lo, o.length.hi}},
                       {"width", {o.width.lo, o.width.hi}},
                       {"height", {o.height.lo, o.height.hi}},
                       {"points_min", o.points_min},
                       {"points_max", o.points_max},
                       {"intensity_mean", o.intensity_mean},
                       {"intensity_std", o.intensity_std},
                       {"speed_max", o.speed_max}});
  }
  return {{"extent", c.extent},
          {"ground_density", c.ground_density},
          {"ground_noise", c.ground_noise},
          {"ground_intensity", c.ground_intensity},
          {"min_separation", c.min_separation},
          {"feature_dim", c.feature_dim},
          {"ego_speed_max", c.ego_speed_max},
          {"ego_yaw_rate_max", c.ego_yaw_rate_max},
          {"max_placement_attempts", c.max_placement_attempts},
          {"objects", objects}};
}

json model_json(const ModelConfig& c) {
  json priors = json::array();
  for (const DimPrior& p : c.anchors.priors) {
    priors.push_back({{"length", p.length}, {"width", p.width}, {"height", p.height}, {"z", p.z}, {"class_id", p.class_id}});
  }
  return {{"crop_radius", c.crop_radius},
          {"feature_dim", c.feature_dim},
          {"featurizer",
           {{"input_dim", c.featurizer.input_dim},
            {"block_widths", c.featurizer.block_widths},
            {"bn_momentum", c.featurizer.bn_momentum},
            {"bn_epsilon", c.featurizer.bn_epsilon}}},
          {"anchors",
           {{"grid_size", c.anchors.grid_size},
            {"grid_extent", c.anchors.grid_extent},
            {"rotations", c.anchors.rotations},
            {"proj_dim", c.anchors.proj_dim},
            {"priors", priors}}}};
}

json train_json(const TrainConfig& c) {
  return {{"lr0", c.lr0},
          {"lr_decay", c.lr_decay},
          {"decay_steps", c.decay_steps},
          {"epochs", c.epochs},
          {"batch_frames", c.batch_frames},
          {"centers_per_frame", c.centers_per_frame},
          {"points_per_crop", c.points_per_crop},
          {"sampler", sampler_name(c.sampler)},
          {"z_min", bound(c.z_range.z_min)},
          {"z_max", bound(c.z_range.z_max)},
          {"validate_every", c.validate_every},
          {"seed", c.seed},
          {"workers", c.workers},
          {"loss",
           {{"focal_alpha", c.loss.focal_alpha},
            {"focal_gamma", c.loss.focal_gamma},
            {"smooth_l1_delta", c.loss.smooth_l1_delta},
            {"cls_weight", c.loss.cls_weight},
            {"loc_weight", c.loss.loc_weight},
            {"heading", c.loss.heading == HeadingLossMode::kSine ? "sine" : "wrapped"}}},
          {"matching",
           {{"foreground_iou", c.matching.foreground_iou},
            {"background_iou", c.matching.background_iou},
            {"force_match", c.matching.force_match}}},
          {"adam", {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"epsilon", c.adam.epsilon}}}};
}

json inference_json(const InferenceConfig& c) {
  return {{"num_centers", c.num_centers},
          {"points_per_crop", c.points_per_crop},
          {"sampler", sampler_name(c.sampler)},
          {"temporal_seed_count", c.temporal_seed_count},
          {"min_score", c.min_score},
          {"nms_iou", c.nms_iou},
          {"max_detections", c.max_detections},
          {"z_min", bound(c.z_range.z_min)},
          {"z_max", bound(c.z_range.z_max)},
          {"seed", c.seed},
          {"workers", c.workers},
          {"chunk_size", c.chunk_size}};
}

json eval_json(const EvalConfig& c) {
  json buckets = json::array();
  for (const RangeBucket& b : c.range_buckets) buckets.push_back({{"name", b.name}, {"lo", b.lo}, {"hi", bound(b.hi)}});
  return {{"iou_threshold", c.iou_threshold},
          {"use_3d_iou", c.use_3d_iou},
          {"min_points", c.min_points},
          {"recall_sample_points", c.recall_sample_points},
          {"range_buckets", buckets}};
}

json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kConfig, std::string("config: malformed JSON: ") + e.what());
  }
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  const json doc = parse_json(text);
  RunConfig c;
  Section root(doc, "");
  root.get("seed", c.seed);
  if (const json* v = root.child("scene")) read_scene(*v, "scene", c.scene);
  if (const json* v = root.child("model")) read_model(*v, "model", c.model);
  if (const json* v = root.child("train")) read_train(*v, "train", c.train);
  if (const json* v = root.child("inference")) read_inference(*v, "inference", c.inference);
  if (const json* v = root.child("eval")) read_eval(*v, "eval", c.eval);
  root.finish();
  validate(c.scene);
  validate(c.model);
  validate(c.train);
  validate(c.inference);
  validate(c.eval);
  if (c.scene.feature_dim != c.model.feature_dim) {
    throw Error(ErrorCode::kConfig, "config: scene.feature_dim must equal model.feature_dim");
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string dump_run_config(const RunConfig& c) {
  const json doc = {{"seed", c.seed},
                    {"scene", scene_json(c.scene)},
                    {"model", model_json(c.model)},
                    {"train", train_json(c.train)},
                    {"inference", inference_json(c.inference)},
                    {"eval", eval_json(c.eval)}};
  return doc.dump(2);
}

std::string model_config_to_json(const ModelConfig& config) { return model_json(config).dump(); }

ModelConfig model_config_from_json(const std::string& text) {
  ModelConfig c = default_model_config();
  read_model(parse_json(text), "model", c);
  validate(c);
  return c;
}

}  // namespace starnet
