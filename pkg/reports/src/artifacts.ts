/**
 * Figure builders: one per CLI artifact family.  Pure readers: every derived
 * number shown (fitted slopes) is re-computed and checked against the
 * CLI-emitted value to 1e-6 before rendering.
 */

import * as fs from 'fs';
import * as path from 'path';

import { CsvTable, column, parseCsv } from './csv.js';
import { fitSlope, log2 } from './fit.js';
import { Figure, heat } from './svg.js';

export interface RenderedFigure {
  file: string;
  title: string;
  configHash: string;
  notes: string[];
}

export const SLOPE_TOLERANCE = 1e-6;

function readCsv(file: string, required: string[]): CsvTable {
  return parseCsv(fs.readFileSync(file, 'utf8'), required);
}

export function renderRayBundle(dir: string, outDir: string): RenderedFigure | null {
  const rayFiles = fs
    .readdirSync(dir)
    .filter((f) => /^ray_\d+\.csv$/.test(f))
    .sort();
  if (rayFiles.length === 0) return null;
  const sliceFile = path.join(dir, 'field_slice.csv');
  let extent = { xmin: -1, xmax: 1, ymin: -1, ymax: 1 };
  let slice: CsvTable | null = null;
  if (fs.existsSync(sliceFile)) {
    slice = readCsv(sliceFile, ['x1', 'x3', 'Bmag']);
    const x1 = column(slice, 'x1');
    const x3 = column(slice, 'x3');
    extent = { xmin: Math.min(...x1), xmax: Math.max(...x1), ymin: Math.min(...x3), ymax: Math.max(...x3) };
  }
  const fig = new Figure(extent, 'Ray bundle over |B| slice (x2 = 0)', 'x1', 'x3');
  let hash = '';
  if (slice) {
    hash = slice.meta.config_sha256 ?? '';
    const x1 = column(slice, 'x1');
    const x3 = column(slice, 'x3');
    const mag = column(slice, 'Bmag');
    const xs = [...new Set(x1)].sort((a, b) => a - b);
    const ys = [...new Set(x3)].sort((a, b) => a - b);
    const dx = xs.length > 1 ? xs[1] - xs[0] : 1;
    const dy = ys.length > 1 ? ys[1] - ys[0] : 1;
    const lo = Math.min(...mag);
    const hi = Math.max(...mag);
    for (let i = 0; i < x1.length; i++) {
      const t = hi > lo ? (mag[i] - lo) / (hi - lo) : 0.5;
      fig.cell(x1[i] - dx / 2, x1[i] + dx / 2, x3[i] - dy / 2, x3[i] + dy / 2, heat(t));
    }
    fig.annotate(`|B| in [${lo.toPrecision(4)}, ${hi.toPrecision(4)}]`);
  }
  for (const rf of rayFiles.slice(0, 200)) {
    const tab = readCsv(path.join(dir, rf), ['x1', 'x3']);
    hash = hash || tab.meta.config_sha256 || '';
    fig.polyline(column(tab, 'x1'), column(tab, 'x3'), '#111', 0.8);
  }
  const file = 'rays.svg';
  fs.writeFileSync(path.join(outDir, file), fig.render());
  return { file, title: 'Ray bundle', configHash: hash, notes: [`${rayFiles.length} rays`] };
}

export function renderConeHistogram(dir: string, outDir: string): RenderedFigure | null {
  const summaryFile = path.join(dir, 'trace_summary.json');
  if (!fs.existsSync(summaryFile)) return null;
  const summary = JSON.parse(fs.readFileSync(summaryFile, 'utf8'));
  const angles: number[] = summary.per_ray_max_angle ?? [];
  if (angles.length === 0) return null;
  const bound: number = summary.cone_bound;
  const bins = 24;
  const lo = 0;
  const hi = bound * 1.15;
  const counts = new Array(bins).fill(0);
  for (const a of angles) {
    const i = Math.min(bins - 1, Math.floor(((a - lo) / (hi - lo)) * bins));
    counts[i] += 1;
  }
  const fig = new Figure(
    { xmin: lo, xmax: hi, ymin: 0, ymax: Math.max(...counts) * 1.1 || 1 },
    'Cone-angle histogram (per-ray maxima)',
    'angle(Xdot, B) [rad]',
    'rays',
  );
  for (let i = 0; i < bins; i++) {
    const x0 = lo + ((hi - lo) * i) / bins;
    const x1 = lo + ((hi - lo) * (i + 1)) / bins;
    fig.bar(x0 + 0.002, x1 - 0.002, counts[i]);
  }
  const fx = (bound - lo) / (hi - lo);
  fig.annotate(`bound arctan(1/(2 sqrt 2)) = ${bound.toFixed(6)}`, Math.max(0.02, fx - 0.45), 0.95);
  // vertical bound marker drawn as a thin cell
  fig.cell(bound - 1e-4, bound + 1e-4, 0, Math.max(...counts) * 1.1 || 1, '#2ca02c');
  const file = 'cone_histogram.svg';
  fs.writeFileSync(path.join(outDir, file), fig.render());
  return {
    file,
    title: 'Cone-angle histogram',
    configHash: summary.config_sha256 ?? '',
    notes: [`max angle ${summary.max_cone_angle.toFixed(9)}`, `bound ${bound.toFixed(9)}`],
  };
}

export function renderSmoothing(dir: string, outDir: string): RenderedFigure | null {
  const csvFile = path.join(dir, 'smoothing.csv');
  const summaryFile = path.join(dir, 'smoothing_summary.json');
  if (!fs.existsSync(csvFile) || !fs.existsSync(summaryFile)) return null;
  const tab = readCsv(csvFile, ['k', 'le_ratio', 'linf_ratio']);
  const summary = JSON.parse(fs.readFileSync(summaryFile, 'utf8'));
  const ks = column(tab, 'k');
  const ratios = column(tab, 'le_ratio').map(log2);
  const { slope, intercept } = fitSlope(ks, ratios);
  const emitted: number = summary.slope;
  if (Math.abs(slope - emitted) > SLOPE_TOLERANCE) {
    throw new Error(
      `smoothing slope mismatch: re-fit ${slope} vs CLI-emitted ${emitted} (tolerance ${SLOPE_TOLERANCE})`,
    );
  }
  const pad = 0.15;
  const ymin = Math.min(...ratios) - pad;
  const ymax = Math.max(...ratios) + pad;
  const fig = new Figure(
    { xmin: Math.min(...ks) - 0.5, xmax: Math.max(...ks) + 0.5, ymin, ymax },
    'Local smoothing: LE ratio per shell',
    'shell k',
    'log2(||<D>^1/2 b||_LE / ||b0||_L2)',
  );
  fig.scatter(ks, ratios);
  fig.polyline(
    [Math.min(...ks), Math.max(...ks)],
    [intercept + slope * Math.min(...ks), intercept + slope * Math.max(...ks)],
    '#1f77b4',
  );
  fig.annotate(`fitted slope ${slope.toFixed(5)} (CLI ${emitted.toFixed(5)})`);
  const file = 'smoothing.svg';
  fs.writeFileSync(path.join(outDir, file), fig.render());
  return {
    file,
    title: 'Smoothing ratios',
    configHash: summary.config_sha256 ?? tab.meta.config_sha256 ?? '',
    notes: [`slope ${slope.toFixed(6)}`, `background ${summary.background}`],
  };
}

export function renderPsdo(dir: string, outDir: string): RenderedFigure | null {
  const resFile = path.join(dir, 'psdo_residuals.csv');
  if (!fs.existsSync(resFile)) return renderHfCv(dir, outDir);
  const tab = readCsv(resFile, ['shell', 'residual1', 'residual2', 'slope1', 'slope2']);
  const shells = column(tab, 'shell');
  const r1 = column(tab, 'residual1').map(log2);
  const r2 = column(tab, 'residual2').map(log2);
  const fit1 = fitSlope(shells, r1);
  const fit2 = fitSlope(shells, r2);
  const emitted1 = column(tab, 'slope1')[0];
  const emitted2 = column(tab, 'slope2')[0];
  if (Math.abs(fit1.slope - emitted1) > SLOPE_TOLERANCE || Math.abs(fit2.slope - emitted2) > SLOPE_TOLERANCE) {
    throw new Error(
      `psdo slope mismatch: re-fit (${fit1.slope}, ${fit2.slope}) vs CLI (${emitted1}, ${emitted2})`,
    );
  }
  const all = [...r1, ...r2];
  const fig = new Figure(
    {
      xmin: Math.min(...shells) - 0.5,
      xmax: Math.max(...shells) + 0.5,
      ymin: Math.min(...all) - 0.5,
      ymax: Math.max(...all) + 0.5,
    },
    'Composition residual sweep',
    'shell k',
    'log2 ||residual||',
  );
  fig.scatter(shells, r1, '#d62728');
  fig.scatter(shells, r2, '#1f77b4');
  fig.polyline(shells, shells.map((k) => fit1.intercept + fit1.slope * k), '#d62728');
  fig.polyline(shells, shells.map((k) => fit2.intercept + fit2.slope * k), '#1f77b4');
  fig.annotate(`slopes ${fit1.slope.toFixed(3)} / ${fit2.slope.toFixed(3)}`);
  const file = 'psdo_residuals.svg';
  fs.writeFileSync(path.join(outDir, file), fig.render());
  return {
    file,
    title: 'Pseudodifferential composition residuals',
    configHash: tab.meta.config_sha256 ?? '',
    notes: [`slope1 ${fit1.slope.toFixed(4)}`, `slope2 ${fit2.slope.toFixed(4)}`],
  };
}

function renderHfCv(dir: string, outDir: string): RenderedFigure | null {
  const file = path.join(dir, 'psdo_hf_cv.csv');
  if (!fs.existsSync(file)) return null;
  const tab = readCsv(file, ['shell', 'ratio', 'threshold_met']);
  const shells = column(tab, 'shell');
  const ratios = column(tab, 'ratio');
  const fig = new Figure(
    {
      xmin: Math.min(...shells) - 0.5,
      xmax: Math.max(...shells) + 0.5,
      ymin: 0,
      ymax: Math.max(...ratios, 10) * 1.1,
    },
    'High-frequency operator-norm ratios',
    'symbol shell',
    '||Op(a) P_{>k}|| / c00',
  );
  fig.scatter(shells, ratios);
  fig.hline(10, '#2ca02c');
  const out = 'psdo_hf_cv.svg';
  fs.writeFileSync(path.join(outDir, out), fig.render());
  return { file: out, title: 'High-frequency CV ratios', configHash: tab.meta.config_sha256 ?? '', notes: [] };
}

export function renderEnergy(dir: string, outDir: string): RenderedFigure | null {
  const file = path.join(dir, 'diagnostics.csv');
  if (!fs.existsSync(file)) return null;
  const tab = readCsv(file, ['t', 'energy', 'max_divergence']);
  const t = column(tab, 't');
  const e = column(tab, 'energy');
  if (t.length < 2) return null;
  const e0 = e[0];
  const drift = e.map((v) => v / e0 - 1);
  const span = Math.max(...drift.map(Math.abs), 1e-16);
  const fig = new Figure(
    { xmin: t[0], xmax: t[t.length - 1], ymin: -1.2 * span, ymax: 1.2 * span },
    'Energy drift',
    't',
    'E(t)/E(0) - 1',
  );
  fig.polyline(t, drift);
  fig.hline(0, '#999');
  fig.annotate(`max |drift| ${span.toExponential(2)}`);
  const out = 'energy.svg';
  fs.writeFileSync(path.join(outDir, out), fig.render());
  return { file: out, title: 'Solver energy drift', configHash: tab.meta.config_sha256 ?? '', notes: [] };
}

export interface HtmlSection {
  title: string;
  configHash: string;
  html: string;
}

export function certificateSection(dir: string): HtmlSection | null {
  const file = path.join(dir, 'certificate.json');
  if (!fs.existsSync(file)) return null;
  const rep = JSON.parse(fs.readFileSync(file, 'utf8'));
  const rows: string[] = [];
  const display: Record<string, string> = {
    size: 'M',
    nondegeneracy: 'mu',
    mizohata: 'A_sampled',
    asymptotic_uniformity: 'eps',
    nontrapping: 'L_sampled',
  };
  const targetKey: Record<string, string> = {
    size: 'M',
    nondegeneracy: 'mu',
    mizohata: 'A',
    asymptotic_uniformity: 'eps',
    nontrapping: 'L',
  };
  for (const [cond, pass] of Object.entries(rep.passes as Record<string, boolean>)) {
    const measured = rep.measured[display[cond]];
    const target = rep.targets[targetKey[cond]];
    rows.push(
      `<tr class="${pass ? 'pass' : 'fail'}"><td>${cond}</td><td>${Number(measured).toPrecision(6)}</td>` +
        `<td>${Number(target).toPrecision(6)}</td><td>${pass ? 'PASS' : 'FAIL'}</td></tr>`,
    );
  }
  const html = [
    `<p>overall: <strong class="${rep.passed ? 'pass' : 'fail'}">${rep.passed ? 'PASS' : 'FAIL'}</strong>,`,
    ` rays sampled: ${rep.ray_count}</p>`,
    '<table><tr><th>condition</th><th>measured</th><th>target</th><th>status</th></tr>',
    ...rows,
    '</table>',
  ].join('\n');
  return { title: 'Certificate dashboard', configHash: rep.config_sha256 ?? '', html };
}

export function normsSection(dir: string): HtmlSection | null {
  const file = path.join(dir, 'norm_report.json');
  if (!fs.existsSync(file)) return null;
  const rep = JSON.parse(fs.readFileSync(file, 'utf8'));
  const rows: string[] = [];
  for (const [key, value] of Object.entries(rep.summary.totals as Record<string, number>)) {
    rows.push(`<tr><td>${key}</td><td>${Number(value).toPrecision(8)}</td></tr>`);
  }
  const shellRows: string[] = [];
  const first = Object.values(rep.reports)[0] as any;
  if (first) {
    for (const comp of first.components) {
      for (const shell of comp.shells) {
        shellRows.push(
          `<tr><td>${comp.component}</td><td>${shell.k}</td><td>${Number(shell.term).toExponential(4)}</td></tr>`,
        );
      }
    }
  }
  const html = [
    '<table><tr><th>norm</th><th>total</th></tr>',
    ...rows,
    '</table>',
    '<details><summary>per-(component, shell) contributions</summary>',
    '<table><tr><th>component</th><th>shell k</th><th>term</th></tr>',
    ...shellRows,
    '</table></details>',
  ].join('\n');
  return { title: 'Norm tables', configHash: rep.config_sha256 ?? '', html };
}
