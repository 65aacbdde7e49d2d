#include <cctype>
#include <climits>
#include <cstdio>
#include <map>
#include <sstream>
#include <tuple>

#include "reachsos/sdp.hpp"
#include "reachsos/util.hpp"

namespace reachsos {

namespace {

[[noreturn]] void fail(int line_no, const std::string& what) {
  throw SdpError("sdpa parse error at line " + std::to_string(line_no) + ": " +
                 what);
}

bool is_comment(const std::string& line) {
  for (char ch : line) {
    if (std::isspace(static_cast<unsigned char>(ch))) continue;
    return ch == '*' || ch == '"';
  }
  return false;  // blank lines are content (the c line may be empty)
}

// SDPA allows commas, braces and parentheses as separators in the header
// lines; normalize them away before tokenizing.
std::vector<std::string> tokens(const std::string& line) {
  std::string clean = line;
  for (char& ch : clean)
    if (ch == ',' || ch == '{' || ch == '}' || ch == '(' || ch == ')')
      ch = ' ';
  std::vector<std::string> out;
  std::istringstream is(clean);
  std::string t;
  while (is >> t) out.push_back(t);
  return out;
}

long parse_int(const std::string& t, int line_no, const char* what) {
  size_t pos = 0;
  long v = 0;
  try {
    v = std::stol(t, &pos);
  } catch (const std::exception&) {
    fail(line_no, std::string("expected integer ") + what + ", got \"" + t +
                      "\"");
  }
  if (pos != t.size())
    fail(line_no, std::string("expected integer ") + what + ", got \"" + t +
                      "\"");
  return v;
}

double parse_num(const std::string& t, int line_no, const char* what) {
  size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(t, &pos);
  } catch (const std::exception&) {
    fail(line_no,
         std::string("expected number ") + what + ", got \"" + t + "\"");
  }
  if (pos != t.size())
    fail(line_no,
         std::string("expected number ") + what + ", got \"" + t + "\"");
  return v;
}

}  // namespace

std::string export_sdpa(const SdpInstance& inst) {
  const int m = int(inst.rows.size());
  const int nf = inst.n_free();
  const int p = int(inst.blocks.size());

  // Re-merge imported diagonal runs; everything else stays a psd block.
  std::vector<int> out_sizes;
  std::vector<int> fblock(size_t(p), 0), off(size_t(p), 0);
  int run_group = INT_MIN;
  for (int j = 0; j < p; ++j) {
    const SdpBlock& bk = inst.blocks[size_t(j)];
    if (bk.diag_group >= 0 && bk.dim == 1) {
      if (run_group == bk.diag_group) {
        out_sizes.back() -= 1;
        fblock[size_t(j)] = int(out_sizes.size()) - 1;
        off[size_t(j)] = -out_sizes.back() - 1;
      } else {
        run_group = bk.diag_group;
        out_sizes.push_back(-1);
        fblock[size_t(j)] = int(out_sizes.size()) - 1;
        off[size_t(j)] = 0;
      }
    } else {
      run_group = INT_MIN;
      out_sizes.push_back(bk.dim);
      fblock[size_t(j)] = int(out_sizes.size()) - 1;
      off[size_t(j)] = 0;
    }
  }
  int wplus = -1, wminus = -1;
  if (nf > 0) {
    wplus = int(out_sizes.size());
    out_sizes.push_back(-nf);
    wminus = int(out_sizes.size());
    out_sizes.push_back(-nf);
  }

  std::map<std::tuple<int, int, int, int>, double> ent;
  auto add = [&](int k, int fb, int i, int j, double v) {
    if (v != 0.0) ent[{k, fb + 1, i, j}] += v;
  };
  for (const SdpEntry& e : inst.cost)
    add(0, fblock[size_t(e.block)], e.i + 1 + off[size_t(e.block)],
        e.j + 1 + off[size_t(e.block)], -e.v);
  for (int j = 0; j < nf; ++j) {
    add(0, wplus, j + 1, j + 1, -inst.c[size_t(j)]);
    add(0, wminus, j + 1, j + 1, inst.c[size_t(j)]);
  }
  for (int i = 0; i < m; ++i) {
    for (const auto& [idx, v] : inst.rows[size_t(i)].w) {
      add(i + 1, wplus, idx + 1, idx + 1, v);
      add(i + 1, wminus, idx + 1, idx + 1, -v);
    }
    for (const SdpEntry& e : inst.rows[size_t(i)].mats)
      add(i + 1, fblock[size_t(e.block)], e.i + 1 + off[size_t(e.block)],
          e.j + 1 + off[size_t(e.block)], e.v);
  }

  std::ostringstream os;
  os << "*reachsos sdpa sparse export\n";
  if (nf > 0)
    os << "*reachsos free-pair: blocks " << wplus + 1 << " " << wminus + 1
       << " encode " << nf << " free variables as w+ - w-\n";
  os << m << "\n" << out_sizes.size() << "\n";
  for (size_t j = 0; j < out_sizes.size(); ++j)
    os << (j ? " " : "") << out_sizes[j];
  os << "\n";
  for (int i = 0; i < m; ++i)
    os << (i ? " " : "") << fmt17(inst.rows[size_t(i)].rhs);
  os << "\n";
  for (const auto& [key, v] : ent) {
    if (v == 0.0) continue;
    const auto& [k, fb, i, j] = key;
    os << k << " " << fb << " " << i << " " << j << " " << fmt17(v) << "\n";
  }
  return os.str();
}

SdpInstance import_sdpa(const std::string& text) {
  std::vector<std::string> lines;
  {
    std::string cur;
    for (char ch : text) {
      if (ch == '\n') {
        lines.push_back(cur);
        cur.clear();
      } else if (ch != '\r') {
        cur += ch;
      }
    }
    if (!cur.empty()) lines.push_back(cur);
  }

  int fp_b1 = -1, fp_b2 = -1, fp_nf = 0;
  size_t pos = 0;
  auto next_line = [&](const char* what) -> std::pair<int, std::string> {
    while (pos < lines.size()) {
      const std::string& line = lines[pos];
      ++pos;
      if (is_comment(line)) {
        size_t at = line.find("free-pair:");
        if (at != std::string::npos) {
          int b1 = 0, b2 = 0, n = 0;
          if (std::sscanf(line.c_str() + at, "free-pair: blocks %d %d encode %d",
                          &b1, &b2, &n) == 3) {
            fp_b1 = b1;
            fp_b2 = b2;
            fp_nf = n;
          }
        }
        continue;
      }
      return {int(pos), line};
    }
    fail(int(lines.size()) + 1, std::string("unexpected end of file, wanted ") +
                                    what);
  };

  auto [ln_m, line_m] = next_line("constraint count (mDIM)");
  auto tok = tokens(line_m);
  if (tok.size() != 1) fail(ln_m, "expected constraint count (mDIM)");
  const long m = parse_int(tok[0], ln_m, "mDIM");
  if (m < 0) fail(ln_m, "mDIM must be non-negative");

  auto [ln_nb, line_nb] = next_line("block count (nBLOCK)");
  tok = tokens(line_nb);
  if (tok.size() != 1) fail(ln_nb, "expected block count (nBLOCK)");
  const long nblock = parse_int(tok[0], ln_nb, "nBLOCK");
  if (nblock < 0) fail(ln_nb, "nBLOCK must be non-negative");

  std::vector<long> sizes;
  int ln_sizes = 0;
  if (nblock > 0) {
    auto [ln_s, line_s] = next_line("block sizes");
    ln_sizes = ln_s;
    tok = tokens(line_s);
    if (long(tok.size()) != nblock)
      fail(ln_s, "expected " + std::to_string(nblock) + " block sizes, got " +
                     std::to_string(tok.size()));
    for (const auto& t : tok) {
      long s = parse_int(t, ln_s, "block size");
      if (s == 0) fail(ln_s, "block size 0");
      sizes.push_back(s);
    }
  } else {
    ln_sizes = ln_nb;
  }

  std::vector<double> rhs(size_t(m), 0.0);
  if (m > 0) {
    auto [ln_c, line_c] = next_line("right-hand sides");
    tok = tokens(line_c);
    if (long(tok.size()) != m)
      fail(ln_c, "expected " + std::to_string(m) + " values, got " +
                     std::to_string(tok.size()));
    for (long i = 0; i < m; ++i)
      rhs[size_t(i)] = parse_num(tok[size_t(i)], ln_c, "right-hand side");
  } else if (pos < lines.size() && !is_comment(lines[pos]) &&
             tokens(lines[pos]).empty()) {
    ++pos;  // the optional empty c line of an mDIM=0 file
  }

  // Validate the free-pair annotation against the block table.
  if (fp_nf > 0) {
    auto bad = [&](const std::string& why) {
      fail(ln_sizes, "free-pair annotation does not match block table: " + why);
    };
    if (fp_b1 < 1 || fp_b1 > nblock || fp_b2 < 1 || fp_b2 > nblock)
      bad("block index out of range");
    if (sizes[size_t(fp_b1 - 1)] != -fp_nf || sizes[size_t(fp_b2 - 1)] != -fp_nf)
      bad("pair blocks must be diagonal with one entry per free variable");
  }

  SdpInstance inst;
  inst.c.assign(size_t(fp_nf), 0.0);
  inst.rows.resize(size_t(m));
  for (long i = 0; i < m; ++i) inst.rows[size_t(i)].rhs = rhs[size_t(i)];

  // File block -> instance block mapping. kind: 0 psd, 1 w+, 2 w-, 3 diag run.
  struct FileBlock {
    int kind = 0;
    int first = 0;  // instance block index of the (first) mapped block
    long size = 0;
  };
  std::vector<FileBlock> fmap(static_cast<size_t>(nblock));
  for (long fb = 0; fb < nblock; ++fb) {
    long s = sizes[size_t(fb)];
    FileBlock& f = fmap[size_t(fb)];
    f.size = s;
    if (fp_nf > 0 && fb + 1 == fp_b1) {
      f.kind = 1;
    } else if (fp_nf > 0 && fb + 1 == fp_b2) {
      f.kind = 2;
    } else if (s > 0) {
      f.kind = 0;
      f.first = int(inst.blocks.size());
      inst.blocks.push_back(
          {"block" + std::to_string(fb + 1), int(s), -1});
    } else {
      f.kind = 3;
      f.first = int(inst.blocks.size());
      for (long r = 0; r < -s; ++r)
        inst.blocks.push_back({"block" + std::to_string(fb + 1) + "d" +
                                   std::to_string(r + 1),
                               1, int(fb)});
    }
  }

  for (; pos < lines.size(); ++pos) {
    const std::string& line = lines[pos];
    const int ln = int(pos) + 1;
    if (is_comment(line)) continue;
    tok = tokens(line);
    if (tok.empty()) continue;
    if (tok.size() != 5)
      fail(ln, "expected 5 fields \"k block i j value\", got " +
                   std::to_string(tok.size()));
    long k = parse_int(tok[0], ln, "constraint index");
    long fb = parse_int(tok[1], ln, "block index");
    long i = parse_int(tok[2], ln, "row index");
    long j = parse_int(tok[3], ln, "column index");
    double v = parse_num(tok[4], ln, "value");
    if (k < 0 || k > m) fail(ln, "constraint index out of range");
    if (fb < 1 || fb > nblock) fail(ln, "block index out of range");
    const FileBlock& f = fmap[size_t(fb - 1)];
    long dim = std::labs(f.size);
    if (i < 1 || j < 1 || i > dim || j > dim)
      fail(ln, "entry index out of range for block " + std::to_string(fb));
    if (i > j) std::swap(i, j);
    if (f.size < 0 && i != j)
      fail(ln, "off-diagonal entry in diagonal block " + std::to_string(fb));
    switch (f.kind) {
      case 1:  // w+: diagonal carries objective (k=0) / row coefficients
        if (k == 0)
          inst.c[size_t(i - 1)] = -v;
        else
          inst.rows[size_t(k - 1)].w.push_back({int(i - 1), v});
        break;
      case 2:  // w-: mirror of w+, content implied
        break;
      case 0:
        if (k == 0)
          inst.cost.push_back({f.first, int(i - 1), int(j - 1), -v});
        else
          inst.rows[size_t(k - 1)].mats.push_back(
              {f.first, int(i - 1), int(j - 1), v});
        break;
      case 3: {
        int bidx = f.first + int(i - 1);
        if (k == 0)
          inst.cost.push_back({bidx, 0, 0, -v});
        else
          inst.rows[size_t(k - 1)].mats.push_back({bidx, 0, 0, v});
        break;
      }
    }
  }
  return inst;
}

}  // namespace reachsos
