#!/usr/bin/env python3
"""Writes the URDF models under robots/.

Parameters are approximate published values; they only need to be physically
plausible for the dynamics and quantization studies.
"""
import math
import pathlib

PI = math.pi
HALF = PI / 2
OUT = pathlib.Path(__file__).resolve().parent.parent / "robots"


def fmt(*xs):
    return " ".join(repr(float(x)) for x in xs)


class Urdf:
    def __init__(self, name):
        self.name = name
        self.parts = []

    def link(self, name, mass=None, com=(0, 0, 0), inertia=(0, 0, 0)):
        if mass is None:
            self.parts.append(f'  <link name="{name}"/>')
            return
        ixx, iyy, izz = inertia
        self.parts.append(
            f'  <link name="{name}">\n'
            f"    <inertial>\n"
            f'      <origin xyz="{fmt(*com)}" rpy="0 0 0"/>\n'
            f'      <mass value="{mass}"/>\n'
            f'      <inertia ixx="{ixx}" ixy="0" ixz="0" iyy="{iyy}" iyz="0" izz="{izz}"/>\n'
            f"    </inertial>\n"
            f"  </link>"
        )

    def joint(self, name, kind, parent, child, xyz=(0, 0, 0), rpy=(0, 0, 0), axis=(0, 0, 1),
              lower=-PI, upper=PI, effort=100.0, velocity=2.0):
        body = (
            f'  <joint name="{name}" type="{kind}">\n'
            f'    <parent link="{parent}"/>\n'
            f'    <child link="{child}"/>\n'
            f'    <origin xyz="{fmt(*xyz)}" rpy="{fmt(*rpy)}"/>\n'
        )
        if kind != "fixed":
            body += f'    <axis xyz="{fmt(*axis)}"/>\n'
            body += f'    <limit lower="{lower}" upper="{upper}" effort="{effort}" velocity="{velocity}"/>\n'
        self.parts.append(body + "  </joint>")

    def write(self, filename):
        text = f'<?xml version="1.0"?>\n<robot name="{self.name}">\n' + "\n".join(self.parts) + "\n</robot>\n"
        (OUT / filename).write_text(text)


def pendulum():
    u = Urdf("pendulum")
    u.link("base")
    u.link("pole", 1.0, (0, 0, -1.0), (0, 0, 0))
    u.joint("hinge", "revolute", "base", "pole", axis=(0, 1, 0), lower=-PI, upper=PI, effort=20.0, velocity=2.0)
    u.write("pendulum.urdf")


def slider():
    u = Urdf("slider")
    u.link("rail")
    u.link("cart", 1.0, (0, 0, 0), (0.01, 0.01, 0.01))
    u.joint("slide", "prismatic", "rail", "cart", axis=(1, 0, 0), lower=-1.0, upper=1.0, effort=10.0, velocity=1.0)
    u.write("slider.urdf")


def iiwa():
    u = Urdf("iiwa14")
    u.link("iiwa_link_0", 5.0, (-0.1, 0, 0.07), (0.05, 0.06, 0.03))
    links = [
        (5.76, (0, -0.03, 0.12), (0.033, 0.0333, 0.0123)),
        (6.35, (0.0003, 0.059, 0.042), (0.0305, 0.0304, 0.011)),
        (3.5, (0, 0.03, 0.13), (0.025, 0.0238, 0.0076)),
        (3.5, (0, 0.067, 0.034), (0.017, 0.0164, 0.006)),
        (3.5, (0.0001, 0.021, 0.076), (0.01, 0.0087, 0.00449)),
        (1.8, (0, 0.0006, 0.0004), (0.0049, 0.0047, 0.0036)),
        (1.2, (0, 0, 0.02), (0.001, 0.001, 0.001)),
    ]
    origins = [
        ((0, 0, 0.1575), (0, 0, 0)),
        ((0, 0, 0.2025), (HALF, 0, PI)),
        ((0, 0.2045, 0), (HALF, 0, PI)),
        ((0, 0, 0.2155), (HALF, 0, 0)),
        ((0, 0.1845, 0), (-HALF, PI, 0)),
        ((0, 0, 0.2155), (HALF, 0, 0)),
        ((0, 0.081, 0), (-HALF, PI, 0)),
    ]
    limits = [2.96706, 2.0944, 2.96706, 2.0944, 2.96706, 2.0944, 3.05433]
    efforts = [320, 320, 176, 176, 110, 40, 40]
    velocities = [1.4835, 1.4835, 1.7453, 1.309, 2.2689, 2.3562, 2.3562]
    for i, (mass, com, inertia) in enumerate(links):
        u.link(f"iiwa_link_{i + 1}", mass, com, inertia)
        xyz, rpy = origins[i]
        u.joint(f"iiwa_joint_{i + 1}", "revolute", f"iiwa_link_{i}", f"iiwa_link_{i + 1}", xyz, rpy,
                lower=-limits[i], upper=limits[i], effort=efforts[i], velocity=velocities[i])
    u.link("iiwa_link_ee")
    u.joint("iiwa_joint_ee", "fixed", "iiwa_link_7", "iiwa_link_ee", (0, 0, 0.045))
    u.write("iiwa14.urdf")


def hyq():
    u = Urdf("hyq")
    u.link("trunk", 53.43, (0, 0, 0), (1.85, 6.21, 6.07))
    legs = {"lf": (0.3735, 0.207), "rf": (0.3735, -0.207), "lh": (-0.3735, 0.207), "rh": (-0.3735, -0.207)}
    for leg, (x, y) in legs.items():
        side = 1.0 if y > 0 else -1.0
        u.link(f"{leg}_hipassembly", 2.93, (0.04, 0, -0.0), (0.0098, 0.0162, 0.0114))
        u.joint(f"{leg}_haa_joint", "revolute", "trunk", f"{leg}_hipassembly", (x, y, 0), (0, 0, 0), (1, 0, 0),
                -1.22, 0.44, 150.0, 12.0)
        u.link(f"{leg}_upperleg", 2.64, (0.15, 0, 0.0), (0.0038, 0.0309, 0.0307))
        u.joint(f"{leg}_hfe_joint", "revolute", f"{leg}_hipassembly", f"{leg}_upperleg", (0.08, 0, 0),
                (HALF * side, 0, -HALF), (0, 0, 1), -0.87, 1.22, 150.0, 12.0)
        u.link(f"{leg}_lowerleg", 0.881, (0.125, 0, 0), (0.0004, 0.0105, 0.0105))
        u.joint(f"{leg}_kfe_joint", "revolute", f"{leg}_upperleg", f"{leg}_lowerleg", (0.35, 0, 0),
                (0, 0, 0), (0, 0, 1), -2.44, -0.36, 150.0, 12.0)
        u.link(f"{leg}_foot")
        u.joint(f"{leg}_foot_joint", "fixed", f"{leg}_lowerleg", f"{leg}_foot", (0.33, 0, 0))
    u.write("hyq.urdf")


def atlas():
    u = Urdf("atlas")
    u.link("pelvis", 9.509, (0.0111, 0, 0.0271), (0.1244, 0.0958, 0.1167))

    def body(name, mass, com, inertia, parent, joint, xyz, axis, lo, hi, effort, vel, rpy=(0, 0, 0)):
        u.link(name, mass, com, inertia)
        u.joint(joint, "revolute", parent, name, xyz, rpy, axis, lo, hi, effort, vel)

    body("ltorso", 2.27, (-0.0112984, -3.15366e-06, 0.0746835), (0.0039092, 0.0034156, 0.0044765), "pelvis",
         "back_bkz", (-0.0125, 0, 0), (0, 0, 1), -0.663, 0.663, 106.0, 12.0)
    body("mtorso", 0.799, (-0.00816266, -0.0131245, 0.0305974), (0.000454181, 0.000483282, 0.000444215), "ltorso",
         "back_bky", (0, 0, 0.162), (0, 1, 0), -0.219, 0.538, 445.0, 9.0)
    body("utorso", 84.409, (-0.0581018, -0.00301342, 0.23384), (1.62, 1.35, 1.15), "mtorso",
         "back_bkx", (0, 0, 0.05), (1, 0, 0), -0.523, 0.523, 300.0, 12.0)
    body("head", 1.41991, (-0.075493, 3.3383e-05, 0.02774), (0.0039, 0.0049, 0.0041), "utorso",
         "neck_ry", (0.2546, 0, 0.6215), (0, 1, 0), -0.602, 1.145, 25.0, 6.28)
    for side, s in (("l", 1.0), ("r", -1.0)):
        body(f"{side}_clav", 4.466, (0, 0, 0), (0.011, 0.009, 0.004), "utorso", f"{side}_arm_shz",
             (0.1406, s * 0.2256, 0.4776), (0, 0, 1), -1.571, 0.785, 87.0, 12.0)
        body(f"{side}_scap", 3.899, (0, 0, 0), (0.00319, 0.00583, 0.00583), f"{side}_clav", f"{side}_arm_shx",
             (0, s * 0.11, -0.245), (1, 0, 0), -1.571, 1.571, 99.0, 12.0)
        body(f"{side}_uarm", 4.386, (0, s * 0.065, 0), (0.00656, 0.00358, 0.00656), f"{side}_scap",
             f"{side}_arm_ely", (0, s * 0.187, -0.016), (0, 1, 0), 0.0, 3.142, 63.0, 12.0)
        body(f"{side}_larm", 3.248, (0, s * 0.078, 0), (0.00265, 0.00446, 0.00446), f"{side}_uarm",
             f"{side}_arm_elx", (0, s * 0.119, 0.0092), (1, 0, 0), -2.356 if s > 0 else 0.0, 0.0 if s > 0 else 2.356,
             112.0, 12.0)
        body(f"{side}_ufarm", 2.4798, (0.00015, s * 0.08296, 0.00037), (0.012731, 0.002857, 0.011948),
             f"{side}_larm", f"{side}_arm_wry", (0, s * 0.29955, -0.00921), (0, 1, 0), -3.011, 3.011, 25.0, 10.0)
        body(f"{side}_lfarm", 0.648, (0.00017, s * -0.02515, 0.0002), (0.000764, 0.000429, 0.000825),
             f"{side}_ufarm", f"{side}_arm_wrx", (0, 0, 0), (1, 0, 0), -1.7628, 1.7628, 25.0, 10.0)
        body(f"{side}_hand", 0.5839, (0.00016, s * -0.08159, 0.00002), (0.000388, 0.000477, 0.000379),
             f"{side}_lfarm", f"{side}_arm_wry2", (0, 0, 0), (0, 1, 0), -2.9671, 2.9671, 25.0, 10.0)
        body(f"{side}_uglut", 1.959, (0.00529262, s * -0.00344732, 0.00313046), (0.00074276, 0.000688179,
             0.00041242), "pelvis", f"{side}_leg_hpz", (0, s * 0.089, 0), (0, 0, 1), -0.174 if s > 0 else -0.786,
             0.786 if s > 0 else 0.174, 275.0, 12.0)
        body(f"{side}_lglut", 0.898, (0.0133341, s * 0.0170484, -0.0312052), (0.000691326, 0.00126856,
             0.000903766), f"{side}_uglut", f"{side}_leg_hpx", (0, 0, 0), (1, 0, 0), -0.523 if s > 0 else -0.495,
             0.495 if s > 0 else 0.523, 530.0, 12.0)
        body(f"{side}_uleg", 8.204, (-0.0294, 0.0, -0.2231), (0.09, 0.09, 0.02), f"{side}_lglut",
             f"{side}_leg_hpy", (0.05, s * 0.0225, -0.066), (0, 1, 0), -1.61, 0.65, 840.0, 12.0)
        body(f"{side}_lleg", 4.515, (0.001, 0, -0.1872), (0.077, 0.076, 0.01), f"{side}_uleg", f"{side}_leg_kny",
             (-0.05, 0, -0.374), (0, 1, 0), 0.0, 2.35, 890.0, 12.0)
        body(f"{side}_talus", 0.125, (0, 0, 0), (1.01674e-05, 8.42775e-06, 1.30101e-05), f"{side}_lleg",
             f"{side}_leg_aky", (0, 0, -0.422), (0, 1, 0), -1.0, 0.7, 740.0, 12.0)
        body(f"{side}_foot", 2.41, (0.027, 0, -0.067), (0.002, 0.007, 0.008), f"{side}_talus", f"{side}_leg_akx",
             (0, 0, 0), (1, 0, 0), -0.8, 0.8, 360.0, 12.0)
    u.write("atlas.urdf")


if __name__ == "__main__":
    OUT.mkdir(exist_ok=True)
    pendulum()
    slider()
    iiwa()
    hyq()
    atlas()
