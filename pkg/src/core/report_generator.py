"""报告生成器 - 汇总拟合系数、长时间统计和集合预报结果"""

import json
from pathlib import Path
from typing import Any, Dict, List, Optional

from jinja2 import ChoiceLoader, DictLoader, Environment, FileSystemLoader, TemplateNotFound

from ..processors.error_handler import ConfigurationError


class ReportFormat:
    """报告格式枚举"""
    MARKDOWN = "markdown"
    JSON = "json"


REPORT_TEMPLATE = "report.md.j2"

# 内置模板，不含时间戳以保证产物可复现
BUILTIN_MARKDOWN = """# 降阶模型实验报告

## 配置

- **δ**: {{ config.delta }}
- **观测行数**: {{ config.n_obs }}
- **主种子**: {{ config.seed }}
- **系统参数**: K={{ config.model.K }}, J={{ config.model.J }}, F={{ config.model.F }}, ε={{ config.model.eps }}
- **配置哈希**: `{{ config_hash }}`

{% if narmax %}
## NARMAX 系数

结构 {{ narmax.label }}，拟合方法 {{ narmax.method }}，{{ '已收敛' if narmax.converged else '未收敛' }}（迭代 {{ narmax.iterations }}）。

| 参数 | 值 |
|------|----|
{% for name, value in narmax.coefficients.items() %}
| {{ name }} | {{ "%.4f"|format(value) }} |
{% endfor %}
{% for w in narmax.warnings %}
> ⚠️ {{ w }}
{% endfor %}

{% endif %}
{% if polyar %}
## POLYAR 系数

| 次数 | {% for i in range(polyar.poly|length) %}{{ i }} | {% endfor %}φ | σ |
|------|{% for i in range(polyar.poly|length) %}----|{% endfor %}---|---|
| 系数 | {% for c in polyar.poly %}{{ "%.4f"|format(c) }} | {% endfor %}{{ "%.4f"|format(polyar.phi) }} | {{ "%.4f"|format(polyar.sigma) }} |

{% endif %}
{% if table3 %}
## 长时间统计

| 模型 | 均值 | 标准差 | KS (D) | ACF 最大偏差 |
|------|------|--------|--------|--------------|
{% for row in table3 %}
| {{ row.model }} | {{ "%.4f"|format(row.mean) }} | {{ "%.4f"|format(row.std) }} | {{ "-" if row.ks is none else "%.4f"|format(row.ks) }} | {{ "-" if row.acf_deviation is none else "%.4f"|format(row.acf_deviation) }} |
{% endfor %}

{% endif %}
{% if forecasts %}
## 集合预报

| 模型 | N_ens | 片段 | 剔除成员 | ANCR<0.6 的时效 |
|------|-------|------|----------|-----------------|
{% for f in forecasts %}
| {{ f.model }} | {{ f.ensemble_size }} | {{ f.n_segments }} | {{ f.n_excluded }} | {{ "未跌破" if f.ancr_crossing is none else "%.2f"|format(f.ancr_crossing) }} |
{% endfor %}
{% endif %}
"""


class ReportGenerator:
    """实验报告生成器"""

    def __init__(self, template_dir: Optional[str] = None):
        loaders: List[Any] = []
        if template_dir is not None:
            loaders.append(FileSystemLoader(Path(template_dir)))
        loaders.append(DictLoader({REPORT_TEMPLATE: BUILTIN_MARKDOWN}))
        self.jinja_env = Environment(
            loader=ChoiceLoader(loaders),
            trim_blocks=True,
            lstrip_blocks=True,
            keep_trailing_newline=True,
        )

    def generate(self, data: Dict[str, Any], format_type: str = ReportFormat.MARKDOWN) -> str:
        """生成报告

        Args:
            data: 报告数据，键为 config, config_hash, narmax, polyar, table3, forecasts
            format_type: 报告格式

        Returns:
            str: 报告内容
        """
        if format_type == ReportFormat.MARKDOWN:
            return self._generate_markdown(data)
        elif format_type == ReportFormat.JSON:
            return json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n"
        else:
            raise ConfigurationError(f"不支持的报告格式: {format_type}")

    def _generate_markdown(self, data: Dict[str, Any]) -> str:
        context = {
            "config": data.get("config", {}),
            "config_hash": data.get("config_hash", ""),
            "narmax": data.get("narmax"),
            "polyar": data.get("polyar"),
            "table3": data.get("table3", []),
            "forecasts": data.get("forecasts", []),
        }
        try:
            template = self.jinja_env.get_template(REPORT_TEMPLATE)
        except TemplateNotFound as e:
            raise ConfigurationError(f"报告模板不存在: {e}") from e
        return template.render(**context)
