import init, { caseNames, loci, svCurves, timeSim } from "./pkg/ssolab_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => parseFloat($(id).value);
const pct = (z) => (100 * z).toFixed(2) + " %";

function status(text) {
  $("status").textContent = text;
}

// Runs `work` after the status line has painted.
function busy(label, work) {
  status(label + "…");
  setTimeout(() => {
    const t0 = performance.now();
    try {
      work();
      status(label + " done in " + ((performance.now() - t0) / 1000).toFixed(2) + " s");
    } catch (e) {
      status(label + " failed: " + (e.message || e));
    }
  }, 20);
}

function runLoci(ev) {
  ev?.preventDefault();
  busy("loci", () => {
    const r = JSON.parse(loci($("case").value, $("loci-taus").value, parseInt($("loci-pade").value)));
    $("loci-plot").innerHTML = r.svg;
    const rows = r.points.map((p) =>
      `<tr${p.discontinuity ? ' class="jump"' : ""}><td>${p.mode_id}</td><td>${(p.tau * 1e3).toFixed(2)}</td>` +
      `<td>${p.f_hz.toFixed(3)}</td><td>${pct(p.zeta)}</td></tr>`);
    $("loci-table").innerHTML = "<tr><th>mode</th><th>τ (ms)</th><th>f (Hz)</th><th>ζ</th></tr>" + rows.join("");
  });
}

function runSv(ev) {
  ev?.preventDefault();
  busy("singular values", () => {
    const r = JSON.parse(svCurves($("case").value, num("sv-tau"), num("sv-fmin"), num("sv-fmax"), parseInt($("sv-points").value)));
    $("sv-plot").innerHTML = r.svg;
    $("sv-summary").textContent = r.curves
      .map((c) => `${c.framework.toUpperCase()}: ` +
        (c.resonances.length ? c.resonances.map((p) => `${p.x.toFixed(2)} Hz (${p.prominence.toFixed(1)} dB)`).join(", ") : "no in-band resonance"))
      .join("; ");
  });
}

function runSim(ev) {
  ev?.preventDefault();
  busy("simulation", () => {
    const r = JSON.parse(timeSim($("case").value, $("sim-fw").value, num("sim-tau"), $("sim-machine").value, num("sim-mag"), num("sim-dur")));
    $("sim-plot").innerHTML = r.svg;
    const eig = r.eig.map(([f, z]) => `${f.toFixed(2)} Hz / ${pct(z)}`).join(", ") || "none";
    const prony = r.prony ? `${r.prony.f_hz.toFixed(2)} Hz / ${pct(r.prony.zeta)}` : "no SSO-band mode";
    $("sim-summary").textContent = `Prony: ${prony}. Eigenvalues: ${eig}.` + (r.diverged ? " The run diverged." : "");
  });
}

await init();
for (const name of JSON.parse(caseNames())) {
  const o = document.createElement("option");
  o.textContent = name;
  $("case").append(o);
}
$("case").value = "case4";
$("loci-form").addEventListener("submit", runLoci);
$("sv-form").addEventListener("submit", runSv);
$("sim-form").addEventListener("submit", runSim);
status("ready");
runLoci();
