#include "gkmvlp/manifest.hpp"

#include <fstream>

#include "gkmvlp/errors.hpp"
#include <nlohmann/json.hpp>

namespace gkmvlp {
namespace {

using nlohmann::json;

SampleRecord parse_record(const json& j, const std::filesystem::path& base) {
  const auto& atlas = AtlasVocab::instance();
  SampleRecord r;
  r.sample_id = j.at("sample_id").get<std::string>();
  const std::string where = "sample " + r.sample_id + ": ";

  r.image = read_image(base / j.at("image").get<std::string>());
  r.report = j.at("report").get<std::string>();

  std::vector<EntityTriple> triples;
  for (const json& e : j.at("entities")) {
    const auto name = e.at("name").get<std::string>();
    const auto entity = atlas.entity_index(name);
    if (!entity) throw ValidationError(where + "entities: unknown entity \"" + name + "\"");
    EntityTriple t;
    t.entity = *entity;
    t.exist = e.at("exist").get<bool>();
    for (const json& rn : e.at("regions")) {
      const auto region = atlas.region_index(rn.get<std::string>());
      if (!region) {
        throw ValidationError(where + "entities: unknown region \"" + rn.get<std::string>() + "\"");
      }
      t.regions.push_back(*region);
    }
    triples.push_back(std::move(t));
  }
  try {
    r.prompt = build_prompt_set(triples);
  } catch (const ValidationError& e) {
    throw ValidationError(where + "entities: " + e.what());
  }

  const json& boxes = j.at("boxes");
  if (!boxes.is_array() || boxes.size() != kNumRegions) {
    throw ValidationError(where + "boxes: expected " + std::to_string(kNumRegions) + " boxes");
  }
  for (std::size_t k = 0; k < boxes.size(); ++k) {
    const json& b = boxes[k];
    if (!b.is_array() || b.size() != 4) throw ValidationError(where + "boxes: each box needs 4 integers");
    r.region_boxes[k] = Box{b[0].get<int>(), b[1].get<int>(), b[2].get<int>(), b[3].get<int>()};
  }

  const json& labels = j.at("labels");
  if (!labels.is_array() || labels.size() != kNumEntities) {
    throw ValidationError(where + "labels: expected " + std::to_string(kNumEntities) + " booleans");
  }
  for (std::size_t d = 0; d < labels.size(); ++d) r.label_vector[d] = labels[d].get<bool>();

  for (const json& qa : j.at("qa")) {
    const auto answer_str = qa.at("a").get<std::string>();
    const auto answer = parse_answer(answer_str);
    if (!answer) throw ValidationError(where + "qa: answer outside vocabulary: \"" + answer_str + "\"");
    r.qa_pairs.push_back(QAPair{qa.at("q").get<std::string>(), *answer});
  }

  const auto split = parse_split(j.at("split").get<std::string>());
  if (!split) throw ValidationError(where + "split: unknown split");
  r.split = *split;

  validate_record(r);
  return r;
}

}  // namespace

std::vector<SampleRecord> load_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot open manifest " + path.string());
  const std::filesystem::path base = path.parent_path();
  std::vector<SampleRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ValidationError("manifest line " + std::to_string(line_no) + ": malformed record: " + e.what());
    }
    try {
      records.push_back(parse_record(j, base));
    } catch (const json::exception& e) {
      throw ValidationError("manifest line " + std::to_string(line_no) + ": " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError("manifest line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return records;
}

std::string manifest_line(const SampleRecord& record, const std::string& image_path) {
  const auto& atlas = AtlasVocab::instance();
  json j;
  j["sample_id"] = record.sample_id;
  j["image"] = image_path;
  j["report"] = record.report;
  json entities = json::array();
  for (const EntityTriple& t : record.prompt.triples) {
    json regions = json::array();
    for (int r : t.regions) regions.push_back(atlas.region(r));
    entities.push_back({{"name", atlas.entity(t.entity)}, {"regions", regions}, {"exist", t.exist}});
  }
  j["entities"] = entities;
  json boxes = json::array();
  for (const Box& b : record.region_boxes) boxes.push_back({b.x0, b.y0, b.x1, b.y1});
  j["boxes"] = boxes;
  j["labels"] = record.label_vector;
  json qa = json::array();
  for (const QAPair& p : record.qa_pairs) qa.push_back({{"q", p.question}, {"a", answer_text(p.answer)}});
  j["qa"] = qa;
  j["split"] = std::string(to_string(record.split));
  return j.dump();
}

std::filesystem::path save_manifest(const std::filesystem::path& dir,
                                    const std::vector<SampleRecord>& records) {
  std::filesystem::create_directories(dir / "images");
  const auto manifest_path = dir / kManifestFileName;
  std::ofstream os(manifest_path);
  if (!os) throw ValidationError("cannot write " + manifest_path.string());
  for (const SampleRecord& r : records) {
    const std::string rel = "images/" + r.sample_id + ".pgm";
    write_pgm(dir / rel, r.image);
    os << manifest_line(r, rel) << '\n';
  }
  if (!os) throw ValidationError("failed writing " + manifest_path.string());
  return manifest_path;
}

}  // namespace gkmvlp
