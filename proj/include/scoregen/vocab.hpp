#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "scoregen/common.hpp"
#include "scoregen/image.hpp"

namespace scoregen {

struct SymbolClass {
    std::string canonical_name;
    bool allow_hflip = false;
    bool allow_vflip = false;
    bool allow_rotation = false;
    bool is_bad_shadow = false;
    std::string base_class;  // set iff is_bad_shadow
};

enum class Resolver { none, stem_direction };

struct AliasEntry {
    std::string canonical;
    Resolver resolver = Resolver::none;
};

// Extra information a resolver may consult for one sample.
struct ResolveContext {
    std::optional<std::string> stem_hint;  // "up" | "down" from source metadata
    const Image* image = nullptr;          // ink-positive raster for the heuristic
};

// Stem side from pixels: the notehead is taken as the row with the largest
// ink mass; the stem is wherever the remaining ink's centroid falls.
inline std::string resolve_stem_direction(const Image& img) {
    std::vector<double> row_mass(img.h, 0.0);
    double best = -1.0;
    int head_row = 0;
    for (int r = 0; r < img.h; ++r) {
        for (int c = 0; c < img.w; ++c) row_mass[r] += img.at(r, c);
        if (row_mass[r] > best) {
            best = row_mass[r];
            head_row = r;
        }
    }
    double num = 0.0, den = 0.0;
    const int band = std::max(1, img.h / 16);
    for (int r = 0; r < img.h; ++r) {
        if (std::abs(r - head_row) <= band) continue;
        num += row_mass[r] * r;
        den += row_mass[r];
    }
    if (den <= 0.0) return "up";
    double centroid = num / den;
    return centroid < head_row ? "up" : "down";  // row 0 is the top of the image
}

class ClassVocabulary {
  public:
    // --- construction ---------------------------------------------------

    void add_class(SymbolClass cls) {
        require(index_.find(cls.canonical_name) == index_.end(), Errc::BadConfig,
                "duplicate class " + cls.canonical_name);
        if (cls.is_bad_shadow) {
            auto it = index_.find(cls.base_class);
            require(it != index_.end(), Errc::UnknownLabel,
                    "shadow base " + cls.base_class + " not in vocabulary");
            require(!classes_[it->second].is_bad_shadow, Errc::BadConfig,
                    "shadow base " + cls.base_class + " is itself a shadow");
        } else {
            require(shadow_count_ == 0, Errc::BadConfig,
                    "generation classes must precede shadow classes");
        }
        index_[cls.canonical_name] = classes_.size();
        if (cls.is_bad_shadow) ++shadow_count_;
        classes_.push_back(std::move(cls));
    }

    void add_alias(const std::string& dataset, const std::string& label, AliasEntry entry) {
        if (entry.resolver == Resolver::none) {
            require(index_.count(entry.canonical) > 0, Errc::BadConfig,
                    "alias target " + entry.canonical + " not in vocabulary");
        } else {
            // resolver targets expand to <name>up / <name>down
            require(index_.count(entry.canonical + "up") > 0 &&
                        index_.count(entry.canonical + "down") > 0,
                    Errc::BadConfig, "resolver target " + entry.canonical + " needs up/down classes");
        }
        aliases_[alias_key(dataset, label)] = std::move(entry);
    }

    // Line-oriented definition file:
    //   class <name> [hflip] [vflip] [rotate]
    //   alias <dataset>:<source_label> -> <canonical>[:<resolver>]
    static ClassVocabulary parse(const std::string& text) {
        ClassVocabulary v;
        std::istringstream in(text);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            std::istringstream ls(line);
            std::string kw;
            if (!(ls >> kw)) continue;
            if (kw == "class") {
                SymbolClass c;
                require(static_cast<bool>(ls >> c.canonical_name), Errc::BadConfig,
                        "class line " + std::to_string(lineno) + " missing name");
                std::string flag;
                while (ls >> flag) {
                    if (flag == "hflip")
                        c.allow_hflip = true;
                    else if (flag == "vflip")
                        c.allow_vflip = true;
                    else if (flag == "rotate")
                        c.allow_rotation = true;
                    else
                        raise(Errc::BadConfig, "unknown class flag '" + flag + "' at line " +
                                                   std::to_string(lineno));
                }
                v.add_class(std::move(c));
            } else if (kw == "alias") {
                std::string src, arrow, dst;
                require(static_cast<bool>(ls >> src >> arrow >> dst) && arrow == "->",
                        Errc::BadConfig, "bad alias at line " + std::to_string(lineno));
                auto colon = src.find(':');
                require(colon != std::string::npos, Errc::BadConfig,
                        "alias source needs dataset:label at line " + std::to_string(lineno));
                AliasEntry e;
                auto rcolon = dst.find(':');
                if (rcolon == std::string::npos) {
                    e.canonical = dst;
                } else {
                    e.canonical = dst.substr(0, rcolon);
                    std::string r = dst.substr(rcolon + 1);
                    require(r == "stemdir", Errc::BadConfig,
                            "unknown resolver '" + r + "' at line " + std::to_string(lineno));
                    e.resolver = Resolver::stem_direction;
                }
                v.add_alias(src.substr(0, colon), src.substr(colon + 1), std::move(e));
            } else {
                raise(Errc::BadConfig, "unknown directive '" + kw + "' at line " +
                                           std::to_string(lineno));
            }
        }
        require(!v.classes_.empty(), Errc::BadConfig, "vocabulary defines no classes");
        return v;
    }

    static ClassVocabulary load(const std::string& path) {
        std::ifstream in(path);
        if (!in) raise(Errc::UnreadableSource, "cannot open vocabulary file " + path);
        std::stringstream buf;
        buf << in.rdbuf();
        return parse(buf.str());
    }

    // --- queries ---------------------------------------------------------

    int size() const { return static_cast<int>(classes_.size()); }
    int generation_count() const { return static_cast<int>(classes_.size()) - shadow_count_; }
    int shadow_count() const { return shadow_count_; }
    const std::vector<SymbolClass>& classes() const { return classes_; }

    bool contains(const std::string& name) const { return index_.count(name) > 0; }

    int index_of(const std::string& name) const {
        auto it = index_.find(name);
        require(it != index_.end(), Errc::UnknownLabel, "class " + name + " not in vocabulary");
        return static_cast<int>(it->second);
    }

    const SymbolClass& class_at(int idx) const { return classes_.at(idx); }

    std::string canonicalize(const std::string& dataset, const std::string& label,
                             const ResolveContext& ctx = {}) const {
        auto it = aliases_.find(alias_key(dataset, label));
        require(it != aliases_.end(), Errc::UnknownLabel,
                "no alias for (" + dataset + ", " + label + ")");
        const AliasEntry& e = it->second;
        if (e.resolver == Resolver::none) return e.canonical;
        std::string dir;
        if (ctx.stem_hint) {
            require(*ctx.stem_hint == "up" || *ctx.stem_hint == "down", Errc::BadConfig,
                    "stem hint must be up or down");
            dir = *ctx.stem_hint;
        } else if (ctx.image) {
            dir = resolve_stem_direction(*ctx.image);
        } else {
            raise(Errc::BadConfig,
                  "alias (" + dataset + ", " + label + ") needs stem metadata or an image");
        }
        return e.canonical + dir;
    }

    std::vector<double> one_hot(const std::string& name) const {
        int idx = index_of(name);
        require(!classes_[idx].is_bad_shadow, Errc::BadShadowTarget,
                name + " is a shadow class, not a generation target");
        std::vector<double> v(generation_count(), 0.0);
        v[idx] = 1.0;
        return v;
    }

    ClassVocabulary register_bad_class(const std::string& base) const {
        int idx = index_of(base);
        require(!classes_[idx].is_bad_shadow, Errc::BadShadowTarget,
                "cannot shadow the shadow class " + base);
        std::string shadow_name = base + "bad";
        require(!contains(shadow_name), Errc::DuplicateShadow,
                shadow_name + " already registered");
        ClassVocabulary out = *this;
        SymbolClass shadow;
        shadow.canonical_name = shadow_name;
        shadow.is_bad_shadow = true;
        shadow.base_class = base;
        out.index_[shadow_name] = out.classes_.size();
        out.classes_.push_back(std::move(shadow));
        out.shadow_count_ += 1;
        return out;
    }

    std::uint64_t fingerprint() const {
        std::uint64_t h = 0xcbf29ce484222325ull;
        auto mix = [&h](const std::string& s) {
            for (unsigned char c : s) {
                h ^= c;
                h *= 0x100000001b3ull;
            }
            h ^= 0xff;
            h *= 0x100000001b3ull;
        };
        for (const auto& c : classes_) {
            mix(c.canonical_name);
            h ^= static_cast<std::uint64_t>(c.allow_hflip) | (static_cast<std::uint64_t>(c.allow_vflip) << 1) |
                 (static_cast<std::uint64_t>(c.allow_rotation) << 2) |
                 (static_cast<std::uint64_t>(c.is_bad_shadow) << 3);
            h *= 0x100000001b3ull;
        }
        return h;
    }

  private:
    static std::string alias_key(const std::string& dataset, const std::string& label) {
        return dataset + "\x1f" + label;
    }

    std::vector<SymbolClass> classes_;
    std::map<std::string, std::size_t> index_;
    std::map<std::string, AliasEntry> aliases_;
    int shadow_count_ = 0;
};

}  // namespace scoregen
