/*
 *   Copyright 2026 The mcout Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "mcout/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>
#include <tuple>

#include "mcout/random.hpp"

namespace mcout {

namespace {

struct Rgb {
  int r, g, b;
};

const std::map<std::string, Rgb>& palette() {
  static const std::map<std::string, Rgb> p{
      {"red", {255, 0, 0}},      {"green", {0, 255, 0}},  {"blue", {0, 0, 255}},
      {"yellow", {255, 255, 0}}, {"magenta", {255, 0, 255}}, {"cyan", {0, 255, 255}},
      {"white", {255, 255, 255}}, {"orange", {255, 128, 0}}};
  return p;
}

const std::vector<std::string>& known_shapes() {
  static const std::vector<std::string> s{"square", "circle", "triangle", "cross"};
  return s;
}

const std::array<std::string, 4> kRelations{"left", "right", "above", "below"};

std::string plural(const std::string& shape) {
  return shape == "cross" ? "crosses" : shape + "s";
}

std::string relation_phrase(const std::string& rel) {
  return rel == "left" || rel == "right" ? rel + " of" : rel;
}

// Whether `a` stands in `rel` to `b`, e.g. a is left of b.
bool relation_holds(const std::string& rel, const SceneObject& a, const SceneObject& b) {
  if (rel == "left") return a.col < b.col;
  if (rel == "right") return a.col > b.col;
  if (rel == "above") return a.row < b.row;
  if (rel == "below") return a.row > b.row;
  throw FormatError("unknown relation '" + rel + "'");
}

const SceneObject* find_kind(const SampleMeta& m, const std::string& color,
                             const std::string& shape) {
  for (const auto& o : m.objects)
    if (o.color == color && o.shape == shape) return &o;
  return nullptr;
}

bool covers(const std::string& shape, std::size_t dx, std::size_t dy, std::size_t px) {
  if (shape == "square") return true;
  if (shape == "circle") {
    const double c = (static_cast<double>(px) - 1.0) / 2.0;
    const double r = static_cast<double>(px) / 2.0;
    const double ddx = static_cast<double>(dx) - c, ddy = static_cast<double>(dy) - c;
    return ddx * ddx + ddy * ddy <= r * r;
  }
  if (shape == "triangle") return dx <= dy;
  if (shape == "cross") return dx == dy || dx + dy == px - 1;
  throw FormatError("unknown shape '" + shape + "'");
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(text);
  while (std::getline(is, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::size_t parse_size(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(value, &used);
    if (used != value.size() || value.front() == '-') throw std::invalid_argument(value);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected a non-negative integer, got '" +
                      value + "'");
  }
}

// Open-ended ground truth before any choice-letter mapping.
std::string open_answer(const SampleMeta& m) {
  switch (m.task) {
    case TaskKind::Count: {
      std::size_t n = 0;
      for (const auto& o : m.objects) n += o.color == m.color && o.shape == m.shape;
      return std::to_string(n);
    }
    case TaskKind::SpatialRelation: {
      const SceneObject* a = find_kind(m, m.color, m.shape);
      const SceneObject* b = find_kind(m, m.color2, m.shape2);
      if (!a || !b) throw FormatError("relation sample lacks its objects");
      return relation_holds(m.relation, *a, *b) ? "yes" : "no";
    }
    case TaskKind::AttributeLookup: {
      for (const auto& o : m.objects)
        if (o.row + 1 == m.row && o.col + 1 == m.col)
          return m.attribute == "color" ? o.color : o.shape;
      return "none";
    }
    case TaskKind::MultiHop: {
      const SceneObject* anchor = find_kind(m, m.color, m.shape);
      if (!anchor) throw FormatError("multi-hop sample lacks its anchor object");
      std::size_t n = 0;
      for (const auto& o : m.objects)
        if (&o != anchor && relation_holds(m.relation, o, *anchor)) ++n;
      return std::to_string(n);
    }
  }
  throw FormatError("unknown task kind");
}

}  // namespace

std::string to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::Count: return "count";
    case TaskKind::SpatialRelation: return "spatial-relation";
    case TaskKind::AttributeLookup: return "attribute-lookup";
    case TaskKind::MultiHop: return "multi-hop";
  }
  return "?";
}

TaskKind parse_task_kind(std::string_view text) {
  if (text == "count") return TaskKind::Count;
  if (text == "spatial-relation") return TaskKind::SpatialRelation;
  if (text == "attribute-lookup") return TaskKind::AttributeLookup;
  if (text == "multi-hop") return TaskKind::MultiHop;
  throw ConfigError("unknown task kind '" + std::string(text) + "'");
}

std::string to_string(AnswerMode mode) {
  return mode == AnswerMode::Open ? "open" : "choice";
}

AnswerMode parse_answer_mode(std::string_view text) {
  if (text == "open") return AnswerMode::Open;
  if (text == "choice") return AnswerMode::MultipleChoice;
  throw ConfigError("unknown answer mode '" + std::string(text) + "'");
}

// --- meta serialization ---------------------------------------------------------

nlohmann::json SampleMeta::to_json() const {
  nlohmann::json objs = nlohmann::json::array();
  for (const auto& o : objects)
    objs.push_back({{"row", o.row}, {"col", o.col}, {"color", o.color}, {"shape", o.shape}});
  return {{"task", to_string(task)},  {"mode", to_string(mode)},
          {"grid", grid},             {"image_size", image_size},
          {"seed", seed},             {"objects", objs},
          {"color", color},           {"shape", shape},
          {"relation", relation},     {"color2", color2},
          {"shape2", shape2},         {"attribute", attribute},
          {"row", row},               {"col", col},
          {"choices", choices}};
}

SampleMeta SampleMeta::from_json(const nlohmann::json& j) {
  try {
    SampleMeta m;
    m.task = parse_task_kind(j.at("task").get<std::string>());
    m.mode = parse_answer_mode(j.at("mode").get<std::string>());
    m.grid = j.at("grid").get<std::size_t>();
    m.image_size = j.at("image_size").get<std::size_t>();
    m.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& o : j.at("objects"))
      m.objects.push_back({o.at("row").get<std::size_t>(), o.at("col").get<std::size_t>(),
                           o.at("color").get<std::string>(),
                           o.at("shape").get<std::string>()});
    m.color = j.at("color").get<std::string>();
    m.shape = j.at("shape").get<std::string>();
    m.relation = j.at("relation").get<std::string>();
    m.color2 = j.at("color2").get<std::string>();
    m.shape2 = j.at("shape2").get<std::string>();
    m.attribute = j.at("attribute").get<std::string>();
    m.row = j.at("row").get<std::size_t>();
    m.col = j.at("col").get<std::size_t>();
    m.choices = j.at("choices").get<std::vector<std::string>>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("sample meta: ") + e.what());
  }
}

// --- spec ---------------------------------------------------------------------------

void DatasetSpec::validate() const {
  if (grid == 0 || image_size == 0 || image_size % grid != 0)
    throw ConfigError("dataset: image_size must be a positive multiple of grid");
  if (image_size / grid < 3)
    throw ConfigError("dataset: cells need at least 3 pixels to tell shapes apart");
  if (grid > 8) throw ConfigError("dataset: grid is limited to 8x8");
  const std::size_t px = image_size / grid;
  if (colors.empty() || shapes.empty())
    throw ConfigError("dataset: colors and shapes must be non-empty");
  for (const auto& c : colors)
    if (!palette().count(c)) throw ConfigError("dataset: unknown color '" + c + "'");
  for (const auto& s : shapes)
    if (std::find(known_shapes().begin(), known_shapes().end(), s) == known_shapes().end())
      throw ConfigError("dataset: unknown shape '" + s + "'");
  // Shapes must stay distinguishable at this cell size.
  for (std::size_t i = 0; i < shapes.size(); ++i)
    for (std::size_t j = i + 1; j < shapes.size(); ++j) {
      bool same = true;
      for (std::size_t y = 0; y < px && same; ++y)
        for (std::size_t x = 0; x < px && same; ++x)
          same = covers(shapes[i], x, y, px) == covers(shapes[j], x, y, px);
      if (same)
        throw ConfigError("dataset: " + shapes[i] + " and " + shapes[j] +
                          " look identical in " + std::to_string(px) + "-pixel cells");
    }
  if (max_objects > grid * grid)
    throw ConfigError("dataset: grid " + std::to_string(grid) + "x" + std::to_string(grid) +
                      " too small for " + std::to_string(max_objects) + " objects");
  const std::size_t kinds = colors.size() * shapes.size();
  if ((task == TaskKind::SpatialRelation || task == TaskKind::MultiHop) && kinds < 2)
    throw ConfigError("dataset: relation tasks need at least two object kinds");
  if ((task == TaskKind::SpatialRelation || task == TaskKind::AttributeLookup ||
       task == TaskKind::MultiHop) && max_objects < (task == TaskKind::SpatialRelation ? 2u : 1u))
    throw ConfigError("dataset: max_objects too small for the task");
  if (num_choices < 2 || num_choices > 4)
    throw ConfigError("dataset: choices must be between 2 and 4");
  if (samples == 0) throw ConfigError("dataset: samples must be positive");
}

DatasetSpec DatasetSpec::from_key_values(const std::map<std::string, std::string>& kv) {
  DatasetSpec s;
  for (const auto& [key, value] : kv) {
    if (key == "task") s.task = parse_task_kind(value);
    else if (key == "grid") s.grid = parse_size(key, value);
    else if (key == "image_size") s.image_size = parse_size(key, value);
    else if (key == "colors") s.colors = split_list(value);
    else if (key == "shapes") s.shapes = split_list(value);
    else if (key == "samples") s.samples = parse_size(key, value);
    else if (key == "seed") s.seed = parse_size(key, value);
    else if (key == "answer_mode") s.mode = parse_answer_mode(value);
    else if (key == "max_objects") s.max_objects = parse_size(key, value);
    else if (key == "max_count") s.max_count = parse_size(key, value);
    else if (key == "choices") s.num_choices = parse_size(key, value);
    else throw ConfigError("dataset spec: unknown key '" + key + "'");
  }
  s.validate();
  return s;
}

// --- generation -----------------------------------------------------------------------

std::string question_text(const SampleMeta& m) {
  std::string q;
  switch (m.task) {
    case TaskKind::Count:
      q = "how many " + m.color + " " + plural(m.shape) + " are there";
      break;
    case TaskKind::SpatialRelation:
      q = "is the " + m.color + " " + m.shape + " " + relation_phrase(m.relation) +
          " the " + m.color2 + " " + m.shape2;
      break;
    case TaskKind::AttributeLookup:
      q = "what " + m.attribute + " is the object at row " + std::to_string(m.row) +
          " column " + std::to_string(m.col);
      break;
    case TaskKind::MultiHop:
      q = "how many objects are " + relation_phrase(m.relation) + " the " + m.color + " " +
          m.shape;
      break;
  }
  if (m.mode == AnswerMode::MultipleChoice) {
    q += " options";
    for (std::size_t i = 0; i < m.choices.size(); ++i)
      q += std::string(" ") + static_cast<char>('a' + i) + " " + m.choices[i];
  }
  return q;
}

std::string oracle_answer(const SampleMeta& meta) {
  const std::string value = open_answer(meta);
  if (meta.mode == AnswerMode::Open) return value;
  auto it = std::find(meta.choices.begin(), meta.choices.end(), value);
  if (it == meta.choices.end()) throw FormatError("correct answer missing from choices");
  return std::string(1, static_cast<char>('A' + (it - meta.choices.begin())));
}

std::vector<int> render_scene(const SampleMeta& m) {
  const std::size_t size = m.image_size;
  if (m.grid == 0 || size % m.grid != 0) throw FormatError("render: bad grid");
  const std::size_t px = size / m.grid;
  std::vector<int> pixels(size * size * 3, 0);
  for (const auto& o : m.objects) {
    auto it = palette().find(o.color);
    if (it == palette().end()) throw FormatError("render: unknown color '" + o.color + "'");
    if (o.row >= m.grid || o.col >= m.grid) throw FormatError("render: object off grid");
    const Rgb c = it->second;
    for (std::size_t dy = 0; dy < px; ++dy)
      for (std::size_t dx = 0; dx < px; ++dx) {
        if (!covers(o.shape, dx, dy, px)) continue;
        const std::size_t y = o.row * px + dy, x = o.col * px + dx;
        int* p = pixels.data() + (y * size + x) * 3;
        p[0] = c.r;
        p[1] = c.g;
        p[2] = c.b;
      }
  }
  return pixels;
}

Image to_image(const std::vector<int>& pixels, std::size_t size) {
  if (pixels.size() != size * size * 3) throw FormatError("image: pixel count mismatch");
  Image img{size, size, 3, std::vector<double>(pixels.size())};
  for (std::size_t i = 0; i < pixels.size(); ++i)
    img.pixels[i] = static_cast<double>(pixels[i]) / 255.0;
  return img;
}

SyntheticSample generate_sample(const DatasetSpec& spec, std::size_t index) {
  const std::uint64_t seed = mix_seed(spec.seed, index);
  Rng rng(seed);
  SampleMeta m;
  m.task = spec.task;
  m.mode = spec.mode;
  m.grid = spec.grid;
  m.image_size = spec.image_size;
  m.seed = seed;

  const std::size_t n_cells = spec.grid * spec.grid;
  std::vector<std::size_t> cells(n_cells);
  auto shuffle_cells = [&] {
    for (std::size_t i = 0; i < n_cells; ++i) cells[i] = i;
    for (std::size_t i = n_cells; i > 1; --i)
      std::swap(cells[i - 1], cells[uniform_index(rng, i)]);
  };
  auto pick = [&](const std::vector<std::string>& v) -> const std::string& {
    return v[uniform_index(rng, v.size())];
  };
  auto place = [&](std::size_t cell, const std::string& color, const std::string& shape) {
    m.objects.push_back({cell / spec.grid, cell % spec.grid, color, shape});
  };
  // A random kind differing from every (color, shape) pair in `avoid`.
  auto other_kind = [&](std::initializer_list<std::pair<std::string, std::string>> avoid) {
    for (;;) {
      std::string c = pick(spec.colors), s = pick(spec.shapes);
      bool clash = false;
      for (const auto& [ac, as] : avoid) clash = clash || (c == ac && s == as);
      if (!clash) return std::make_pair(c, s);
    }
  };
  const std::size_t kinds = spec.colors.size() * spec.shapes.size();
  shuffle_cells();

  switch (spec.task) {
    case TaskKind::Count: {
      m.color = pick(spec.colors);
      m.shape = pick(spec.shapes);
      const std::size_t c = uniform_index(rng, std::min(spec.max_count, spec.max_objects) + 1);
      const std::size_t d = kinds > 1 ? uniform_index(rng, spec.max_objects - c + 1) : 0;
      for (std::size_t i = 0; i < c; ++i) place(cells[i], m.color, m.shape);
      for (std::size_t i = 0; i < d; ++i) {
        auto [oc, os] = other_kind({{m.color, m.shape}});
        place(cells[c + i], oc, os);
      }
      break;
    }
    case TaskKind::SpatialRelation: {
      m.color = pick(spec.colors);
      m.shape = pick(spec.shapes);
      std::tie(m.color2, m.shape2) = other_kind({{m.color, m.shape}});
      m.relation = kRelations[uniform_index(rng, kRelations.size())];
      const bool want_yes = uniform_index(rng, 2) == 1;
      const std::size_t d = kinds > 2 ? uniform_index(rng, spec.max_objects - 1) : 0;
      for (int attempt = 0; attempt < 64; ++attempt) {
        m.objects.clear();
        place(cells[0], m.color, m.shape);
        place(cells[1], m.color2, m.shape2);
        if (relation_holds(m.relation, m.objects[0], m.objects[1]) == want_yes) break;
        shuffle_cells();
      }
      for (std::size_t i = 0; i < d; ++i) {
        auto [oc, os] = other_kind({{m.color, m.shape}, {m.color2, m.shape2}});
        place(cells[2 + i], oc, os);
      }
      break;
    }
    case TaskKind::AttributeLookup: {
      const std::size_t n = 1 + uniform_index(rng, spec.max_objects);
      for (std::size_t i = 0; i < n; ++i) {
        const std::string c = pick(spec.colors);
        place(cells[i], c, pick(spec.shapes));
      }
      const auto& target = m.objects[uniform_index(rng, n)];
      m.row = target.row + 1;
      m.col = target.col + 1;
      m.attribute = uniform_index(rng, 2) == 1 ? "shape" : "color";
      break;
    }
    case TaskKind::MultiHop: {
      m.color = pick(spec.colors);
      m.shape = pick(spec.shapes);
      m.relation = kRelations[uniform_index(rng, kRelations.size())];
      const std::size_t others = uniform_index(rng, spec.max_objects);
      place(cells[0], m.color, m.shape);
      for (std::size_t i = 0; i < others; ++i) {
        auto [oc, os] = other_kind({{m.color, m.shape}});
        place(cells[1 + i], oc, os);
      }
      break;
    }
  }

  if (spec.mode == AnswerMode::MultipleChoice) {
    const std::string value = open_answer(m);
    std::vector<std::string> pool;
    switch (spec.task) {
      case TaskKind::Count:
      case TaskKind::MultiHop:
        for (std::size_t v = 0; v <= std::max(spec.max_objects, spec.num_choices); ++v)
          pool.push_back(std::to_string(v));
        break;
      case TaskKind::SpatialRelation:
        pool = {"yes", "no"};
        break;
      case TaskKind::AttributeLookup:
        pool = m.attribute == "color" ? spec.colors : spec.shapes;
        break;
    }
    pool.erase(std::remove(pool.begin(), pool.end(), value), pool.end());
    const std::size_t k = std::min(spec.num_choices, pool.size() + 1);
    for (std::size_t i = pool.size(); i > 1; --i)
      std::swap(pool[i - 1], pool[uniform_index(rng, i)]);
    m.choices.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k - 1));
    m.choices.insert(m.choices.begin() + static_cast<std::ptrdiff_t>(uniform_index(rng, k)),
                     value);
  }

  SyntheticSample s;
  s.id = to_string(spec.task) + "-" + std::to_string(spec.seed) + "-" + std::to_string(index);
  s.meta = m;
  s.question = question_text(m);
  s.answer = oracle_answer(m);
  s.choices = m.choices;
  s.image = to_image(render_scene(m), m.image_size);
  return s;
}

std::vector<SyntheticSample> generate_dataset(const DatasetSpec& spec) {
  spec.validate();
  std::vector<SyntheticSample> out(spec.samples);
  const auto n = static_cast<std::int64_t>(spec.samples);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i)
    out[static_cast<std::size_t>(i)] = generate_sample(spec, static_cast<std::size_t>(i));
  return out;
}

// --- JSON lines ----------------------------------------------------------------------------

void write_jsonl(std::ostream& os, const std::vector<SyntheticSample>& samples) {
  for (const auto& s : samples) {
    const std::size_t size = s.image.height;
    nlohmann::json image = nlohmann::json::array();
    for (std::size_t y = 0; y < size; ++y) {
      nlohmann::json row = nlohmann::json::array();
      for (std::size_t x = 0; x < s.image.width; ++x) {
        nlohmann::json px = nlohmann::json::array();
        for (std::size_t c = 0; c < s.image.channels; ++c)
          px.push_back(static_cast<int>(std::lround(s.image.at(y, x, c) * 255.0)));
        row.push_back(std::move(px));
      }
      image.push_back(std::move(row));
    }
    nlohmann::json j{{"id", s.id},
                     {"image", std::move(image)},
                     {"question", s.question},
                     {"answer", s.answer},
                     {"meta", s.meta.to_json()}};
    if (s.meta.mode == AnswerMode::MultipleChoice) j["choices"] = s.choices;
    os << j.dump() << '\n';
  }
}

void save_dataset(const std::string& path, const std::vector<SyntheticSample>& samples) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write dataset '" + path + "'");
  write_jsonl(os, samples);
  if (!os) throw IoError("failed writing dataset '" + path + "'");
}

std::vector<SyntheticSample> read_jsonl(std::istream& is) {
  std::vector<SyntheticSample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      SyntheticSample s;
      s.id = j.at("id").get<std::string>();
      s.question = j.at("question").get<std::string>();
      s.answer = j.at("answer").get<std::string>();
      if (j.contains("choices")) s.choices = j.at("choices").get<std::vector<std::string>>();
      s.meta = SampleMeta::from_json(j.at("meta"));
      const auto& img = j.at("image");
      const std::size_t h = img.size();
      const std::size_t w = h ? img.at(0).size() : 0;
      const std::size_t c = w ? img.at(0).at(0).size() : 0;
      if (h == 0 || w == 0 || (c != 1 && c != 3))
        throw FormatError("image must be a non-empty H x W x C array");
      s.image = Image{h, w, c, {}};
      s.image.pixels.reserve(h * w * c);
      for (const auto& row : img) {
        if (row.size() != w) throw FormatError("ragged image rows");
        for (const auto& px : row) {
          if (px.size() != c) throw FormatError("ragged image channels");
          for (const auto& v : px) {
            const int iv = v.get<int>();
            if (iv < 0 || iv > 255) throw FormatError("pixel value outside 0..255");
            s.image.pixels.push_back(static_cast<double>(iv) / 255.0);
          }
        }
      }
      out.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("dataset line " + std::to_string(line_no) + ": " + e.what());
    } catch (const FormatError& e) {
      throw FormatError("dataset line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<SyntheticSample> load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open dataset '" + path + "'");
  return read_jsonl(is);
}

}  // namespace mcout
