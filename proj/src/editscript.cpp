#include "specforge/editscript.hpp"

#include <algorithm>

namespace specforge::editscript {

std::string op_kind_name(OpKind k) {
    switch (k) {
        case OpKind::substitute: return "substitute";
        case OpKind::erase: return "delete";
        case OpKind::insert: return "insert";
    }
    return "?";
}

EditScript min_edit_script(const std::vector<std::string>& source,
                           const std::vector<std::string>& target) {
    const int n = static_cast<int>(source.size());
    const int m = static_cast<int>(target.size());

    // dp[i][j] = edits to turn source[i..n) into target[j..m); suffix form
    // so the walk below runs forward and ops come out left to right.
    std::vector<std::vector<int>> dp(n + 1, std::vector<int>(m + 1, 0));
    for (int j = 0; j <= m; ++j) dp[n][j] = m - j;
    for (int i = 0; i <= n; ++i) dp[i][m] = n - i;
    for (int i = n - 1; i >= 0; --i) {
        for (int j = m - 1; j >= 0; --j) {
            if (source[i] == target[j]) {
                dp[i][j] = dp[i + 1][j + 1];
            } else {
                dp[i][j] = 1 + std::min({dp[i + 1][j + 1], dp[i + 1][j], dp[i][j + 1]});
            }
        }
    }

    EditScript script;
    int i = 0, j = 0;
    while (i < n || j < m) {
        if (i < n && j < m && source[i] == target[j]) {
            ++i;
            ++j;
            continue;
        }
        if (i < n && j < m && dp[i][j] == 1 + dp[i + 1][j + 1]) {
            script.ops.push_back({OpKind::substitute, i, target[j]});
            ++i;
            ++j;
        } else if (i < n && dp[i][j] == 1 + dp[i + 1][j]) {
            script.ops.push_back({OpKind::erase, i, ""});
            ++i;
        } else {
            script.ops.push_back({OpKind::insert, i, target[j]});
            ++j;
        }
    }
    return script;
}

std::vector<std::string> apply(const EditScript& script,
                               const std::vector<std::string>& source) {
    std::vector<std::string> out;
    int cursor = 0;
    for (const EditOp& op : script.ops) {
        while (cursor < op.pos && cursor < static_cast<int>(source.size())) {
            out.push_back(source[cursor++]);
        }
        switch (op.kind) {
            case OpKind::substitute:
                out.push_back(op.value);
                ++cursor;
                break;
            case OpKind::erase:
                ++cursor;
                break;
            case OpKind::insert:
                out.push_back(op.value);
                break;
        }
    }
    while (cursor < static_cast<int>(source.size())) out.push_back(source[cursor++]);
    return out;
}

}  // namespace specforge::editscript
