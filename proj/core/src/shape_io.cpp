#include "otreg/shape_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace otreg {

namespace {

std::string strip(const std::string& line) {
    std::string s = line;
    if (const auto hash = s.find('#'); hash != std::string::npos) s.erase(hash);
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

std::ifstream open_for_read(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path + "' for reading");
    return in;
}

std::ofstream open_for_write(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    return out;
}

// Chains of segment cells, each cell oriented first -> second. Used by the
// curve writer to recover the stored polylines.
struct Chain {
    std::vector<int> vertices;
    bool closed = false;
};

std::vector<Chain> decompose_chains(const ShapeComplex& shape) {
    const Eigen::Index m = shape.cells.rows();
    std::unordered_map<int, Eigen::Index> cell_from, cell_to;
    for (Eigen::Index c = 0; c < m; ++c) {
        if (!cell_from.emplace(shape.cells(c, 0), c).second ||
            !cell_to.emplace(shape.cells(c, 1), c).second) {
            throw Error("curve cells do not form consistently oriented simple chains");
        }
    }
    std::vector<bool> visited(static_cast<size_t>(m), false);
    std::vector<Chain> chains;
    for (Eigen::Index c0 = 0; c0 < m; ++c0) {
        if (visited[static_cast<size_t>(c0)]) continue;
        // Walk back to the chain start (or detect a loop, which is emitted
        // from its first stored cell so write/read preserves vertex order).
        Eigen::Index start = c0;
        bool closed = false;
        for (;;) {
            const auto prev = cell_to.find(shape.cells(start, 0));
            if (prev == cell_to.end()) break;
            if (prev->second == c0) {
                closed = true;
                start = c0;
                break;
            }
            start = prev->second;
        }
        Chain chain;
        chain.closed = closed;
        chain.vertices.push_back(shape.cells(start, 0));
        Eigen::Index cur = start;
        for (;;) {
            visited[static_cast<size_t>(cur)] = true;
            const int head = shape.cells(cur, 1);
            const auto next = cell_from.find(head);
            if (closed && next != cell_from.end() && next->second == start) break;
            chain.vertices.push_back(head);
            if (next == cell_from.end()) break;
            cur = next->second;
        }
        chains.push_back(std::move(chain));
    }
    return chains;
}

}  // namespace

std::string format_double(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

ShapeComplex read_obj(const std::string& path) {
    std::ifstream in = open_for_read(path);
    std::vector<Eigen::Vector3d> vertices;
    std::vector<Eigen::Vector3i> faces;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string s = strip(line);
        if (s.empty()) continue;
        std::istringstream ss(s);
        std::string tag;
        ss >> tag;
        if (tag == "v") {
            Eigen::Vector3d v;
            if (!(ss >> v(0) >> v(1) >> v(2))) {
                throw Error(path + ":" + std::to_string(line_no) + ": malformed vertex");
            }
            vertices.push_back(v);
        } else if (tag == "f") {
            std::string a, b, c, extra;
            if (!(ss >> a >> b >> c) || (ss >> extra)) {
                throw Error(path + ":" + std::to_string(line_no) +
                            ": only plain triangles are supported");
            }
            Eigen::Vector3i f;
            const std::string toks[3] = {a, b, c};
            for (int k = 0; k < 3; ++k) {
                if (toks[k].find('/') != std::string::npos) {
                    throw Error(path + ":" + std::to_string(line_no) +
                                ": texture/normal face indices are not supported");
                }
                f(k) = std::stoi(toks[k]) - 1;  // 1-based in the file
            }
            faces.push_back(f);
        } else {
            throw Error(path + ":" + std::to_string(line_no) + ": unsupported directive '" +
                        tag + "' (v/f subset only)");
        }
    }
    ShapeComplex shape;
    shape.kind = ShapeKind::Surface3D;
    shape.vertices.resize(static_cast<Eigen::Index>(vertices.size()), 3);
    for (size_t i = 0; i < vertices.size(); ++i) {
        shape.vertices.row(static_cast<Eigen::Index>(i)) = vertices[i].transpose();
    }
    shape.cells.resize(static_cast<Eigen::Index>(faces.size()), 3);
    for (size_t i = 0; i < faces.size(); ++i) {
        shape.cells.row(static_cast<Eigen::Index>(i)) = faces[i].transpose();
    }
    shape.validate();
    return shape;
}

void write_obj(const std::string& path, const ShapeComplex& shape) {
    if (shape.kind != ShapeKind::Surface3D) {
        throw Error("write_obj expects a triangle surface");
    }
    std::ofstream out = open_for_write(path);
    for (Eigen::Index i = 0; i < shape.vertices.rows(); ++i) {
        out << "v " << format_double(shape.vertices(i, 0)) << ' '
            << format_double(shape.vertices(i, 1)) << ' '
            << format_double(shape.vertices(i, 2)) << '\n';
    }
    for (Eigen::Index c = 0; c < shape.cells.rows(); ++c) {
        out << "f " << shape.cells(c, 0) + 1 << ' ' << shape.cells(c, 1) + 1 << ' '
            << shape.cells(c, 2) + 1 << '\n';
    }
}

ShapeComplex read_curves(const std::string& path) {
    std::ifstream in = open_for_read(path);
    std::vector<std::vector<double>> vertex_rows;
    std::vector<std::pair<int, int>> cells;
    int dim = 0;
    int chain_begin = -1;
    bool chain_closed = false;

    const auto finish_chain = [&]() {
        if (chain_begin < 0) return;
        const int chain_end = static_cast<int>(vertex_rows.size());
        const int count = chain_end - chain_begin;
        if (count < 2) throw Error(path + ": curve with fewer than 2 points");
        for (int i = chain_begin; i + 1 < chain_end; ++i) cells.emplace_back(i, i + 1);
        if (chain_closed) cells.emplace_back(chain_end - 1, chain_begin);
    };

    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string s = strip(line);
        if (s.empty()) continue;
        if (s.rfind("curve", 0) == 0) {
            finish_chain();
            chain_begin = static_cast<int>(vertex_rows.size());
            const std::string rest = strip(s.substr(5));
            if (rest == "closed") {
                chain_closed = true;
            } else if (rest.empty()) {
                chain_closed = false;
            } else {
                throw Error(path + ":" + std::to_string(line_no) +
                            ": unrecognized curve header '" + s + "'");
            }
            continue;
        }
        if (chain_begin < 0) {
            throw Error(path + ":" + std::to_string(line_no) +
                        ": vertex row before any curve header");
        }
        std::istringstream ss(s);
        std::vector<double> row;
        double x;
        while (ss >> x) row.push_back(x);
        if (row.size() != 2 && row.size() != 3) {
            throw Error(path + ":" + std::to_string(line_no) +
                        ": expected 2 or 3 coordinates");
        }
        if (dim == 0) dim = static_cast<int>(row.size());
        if (static_cast<int>(row.size()) != dim) {
            throw Error(path + ":" + std::to_string(line_no) + ": inconsistent dimension");
        }
        vertex_rows.push_back(std::move(row));
    }
    finish_chain();
    if (vertex_rows.empty()) throw Error(path + ": no curves found");

    ShapeComplex shape;
    shape.kind = dim == 2 ? ShapeKind::Curve2D : ShapeKind::Curve3D;
    shape.vertices.resize(static_cast<Eigen::Index>(vertex_rows.size()), dim);
    for (size_t i = 0; i < vertex_rows.size(); ++i) {
        for (int k = 0; k < dim; ++k) {
            shape.vertices(static_cast<Eigen::Index>(i), k) = vertex_rows[i][static_cast<size_t>(k)];
        }
    }
    shape.cells.resize(static_cast<Eigen::Index>(cells.size()), 2);
    for (size_t c = 0; c < cells.size(); ++c) {
        shape.cells(static_cast<Eigen::Index>(c), 0) = cells[c].first;
        shape.cells(static_cast<Eigen::Index>(c), 1) = cells[c].second;
    }
    shape.validate();
    return shape;
}

void write_curves(const std::string& path, const ShapeComplex& shape) {
    if (shape.kind == ShapeKind::Surface3D) {
        throw Error("write_curves expects a curve shape");
    }
    const std::vector<Chain> chains = decompose_chains(shape);
    std::ofstream out = open_for_write(path);
    const int d = shape.dim();
    for (const Chain& chain : chains) {
        out << (chain.closed ? "curve closed" : "curve") << '\n';
        for (const int v : chain.vertices) {
            for (int k = 0; k < d; ++k) {
                if (k > 0) out << ' ';
                out << format_double(shape.vertices(v, k));
            }
            out << '\n';
        }
    }
}

ShapeComplex read_shape(const std::string& path, ShapeKind kind) {
    ShapeComplex shape =
        kind == ShapeKind::Surface3D ? read_obj(path) : read_curves(path);
    if (shape.kind != kind) {
        throw DimensionMismatch("file '" + path + "' does not match the configured kind");
    }
    return shape;
}

void write_shape(const std::string& path, const ShapeComplex& shape) {
    if (shape.kind == ShapeKind::Surface3D) {
        write_obj(path, shape);
    } else {
        write_curves(path, shape);
    }
}

void write_measure(const std::string& path, const DiscreteMeasure& measure) {
    std::ofstream out = open_for_write(path);
    const int d = measure.dim();
    for (Eigen::Index i = 0; i < measure.size(); ++i) {
        for (int k = 0; k < d; ++k) out << format_double(measure.positions(i, k)) << ' ';
        for (int k = 0; k < d; ++k) out << format_double(measure.directions(i, k)) << ' ';
        out << format_double(measure.masses(i)) << '\n';
    }
}

DiscreteMeasure read_measure(const std::string& path, int dim) {
    std::ifstream in = open_for_read(path);
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        const std::string s = strip(line);
        if (s.empty()) continue;
        std::istringstream ss(s);
        std::vector<double> row;
        double x;
        while (ss >> x) row.push_back(x);
        if (static_cast<int>(row.size()) != 2 * dim + 1) {
            throw Error(path + ": measure row needs " + std::to_string(2 * dim + 1) +
                        " values");
        }
        rows.push_back(std::move(row));
    }
    DiscreteMeasure measure;
    const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
    measure.positions.resize(n, dim);
    measure.directions.resize(n, dim);
    measure.masses.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (int k = 0; k < dim; ++k) {
            measure.positions(i, k) = rows[static_cast<size_t>(i)][static_cast<size_t>(k)];
            measure.directions(i, k) =
                rows[static_cast<size_t>(i)][static_cast<size_t>(dim + k)];
        }
        measure.masses(i) = rows[static_cast<size_t>(i)][static_cast<size_t>(2 * dim)];
    }
    measure.validate();
    return measure;
}

void write_plan_dense(const std::string& path, const Eigen::MatrixXd& plan) {
    std::ofstream out = open_for_write(path);
    for (Eigen::Index i = 0; i < plan.rows(); ++i) {
        for (Eigen::Index j = 0; j < plan.cols(); ++j) {
            if (j > 0) out << ' ';
            out << format_double(plan(i, j));
        }
        out << '\n';
    }
}

void write_plan_triplets(const std::string& path, const Eigen::MatrixXd& plan,
                         double threshold) {
    std::ofstream out = open_for_write(path);
    for (Eigen::Index i = 0; i < plan.rows(); ++i) {
        for (Eigen::Index j = 0; j < plan.cols(); ++j) {
            if (plan(i, j) > threshold) {
                out << i << ' ' << j << ' ' << format_double(plan(i, j)) << '\n';
            }
        }
    }
}

Eigen::MatrixXd read_plan_dense(const std::string& path) {
    std::ifstream in = open_for_read(path);
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        const std::string s = strip(line);
        if (s.empty()) continue;
        std::istringstream ss(s);
        std::vector<double> row;
        double x;
        while (ss >> x) row.push_back(x);
        if (!rows.empty() && rows.front().size() != row.size()) {
            throw Error(path + ": ragged matrix rows");
        }
        rows.push_back(std::move(row));
    }
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()),
                        rows.empty() ? 0 : static_cast<Eigen::Index>(rows.front().size()));
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        for (Eigen::Index j = 0; j < out.cols(); ++j) {
            out(i, j) = rows[static_cast<size_t>(i)][static_cast<size_t>(j)];
        }
    }
    return out;
}

void write_history(const std::string& path, const std::vector<IterationRecord>& history) {
    std::ofstream out = open_for_write(path);
    out << "iteration\tphase\tenergy\tgrad_norm\tfidelity_regularized\t"
           "fidelity_stripped\tsinkhorn_iterations\tstep_size\twall_clock_s\n";
    for (const auto& rec : history) {
        out << rec.iteration << '\t' << rec.phase << '\t' << format_double(rec.energy)
            << '\t' << format_double(rec.grad_norm) << '\t'
            << format_double(rec.fidelity_regularized) << '\t'
            << format_double(rec.fidelity_stripped) << '\t' << rec.sinkhorn_iterations
            << '\t' << format_double(rec.step_size) << '\t'
            << format_double(rec.wall_clock_s) << '\n';
    }
}

void write_key_values(const std::string& path,
                      const std::vector<std::pair<std::string, std::string>>& entries) {
    std::ofstream out = open_for_write(path);
    for (const auto& [key, value] : entries) {
        out << key << " = " << value << '\n';
    }
}

}  // namespace otreg
